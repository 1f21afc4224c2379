//! Stage runners. Each reads files, runs one part of the pipeline and writes
//! its outputs into the output directory.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use stocknet::factors::{self, FactorOptions};
use stocknet::format::sig;
use stocknet::ingest::{self, GapPolicy, ReturnPanel};
use stocknet::marketstats::{self, FactorIndustryRow, Membership};
use stocknet::network::{self, PowerLawFit};
use stocknet::numerics::Matrix;
use stocknet::regression;
use stocknet::synth::{self, SynthSpec};
use stocknet::Error;

use crate::args::SynthFormat;
use crate::error::CliError;
use crate::files;
use crate::out_path;

#[derive(Debug, Clone, Copy)]
pub enum InputSource<'a> {
    Prices(&'a Path, GapPolicy),
    Returns(&'a Path),
}

fn open(stage: &'static str, path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(CliError::read(stage, path))
}

fn load_returns(stage: &'static str, source: InputSource<'_>) -> Result<ReturnPanel, CliError> {
    match source {
        InputSource::Prices(path, policy) => {
            let prices =
                ingest::load_prices(open(stage, path)?, policy).map_err(CliError::stage(stage))?;
            ingest::to_returns(&prices).map_err(CliError::stage(stage))
        }
        InputSource::Returns(path) => {
            ingest::load_returns(open(stage, path)?).map_err(CliError::stage(stage))
        }
    }
}

fn load_scores(
    stage: &'static str,
    path: &Path,
    returns: &ReturnPanel,
) -> Result<Matrix, CliError> {
    let (dates, scores) =
        factors::read_scores(open(stage, path)?).map_err(CliError::stage(stage))?;
    if dates != returns.dates() {
        return Err(CliError::Stage {
            stage,
            source: Error::DimensionMismatch(format!(
                "scores cover {} dates that do not match the {} return dates",
                dates.len(),
                returns.n_dates()
            )),
        });
    }
    Ok(scores)
}

/// Creates `dir/name` and hands a buffered writer to `body`.
fn write_file<F>(stage: &'static str, dir: &Path, name: &str, body: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> stocknet::Result<()>,
{
    let path = out_path(dir, name);
    let fail = |message: String| CliError::Write {
        stage,
        path: path.display().to_string(),
        message,
    };
    fs::create_dir_all(dir).map_err(|e| fail(e.to_string()))?;
    let mut w = BufWriter::new(File::create(&path).map_err(|e| fail(e.to_string()))?);
    body(&mut w).map_err(|e| fail(e.to_string()))?;
    w.flush().map_err(|e| fail(e.to_string()))?;
    Ok(path)
}

fn invariant(stage: &'static str, message: String) -> CliError {
    CliError::Stage {
        stage,
        source: Error::Invariant(message),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutcome {
    pub n: usize,
    pub edges: usize,
    pub l_min: usize,
    pub l_max: usize,
    pub power_law: Option<PowerLawFit>,
}

pub fn network(source: &InputSource<'_>, out: &Path) -> Result<NetworkOutcome, CliError> {
    const STAGE: &str = "network";
    let returns = load_returns(STAGE, *source)?;
    let corr = network::correlation_matrix(&returns).map_err(CliError::stage(STAGE))?;
    let dist = network::distance_matrix(&corr);
    let tree = network::kruskal_mst(&dist).map_err(CliError::stage(STAGE))?;
    let dist_bins = network::degree_distribution(&tree);
    let tickers = returns.tickers();

    write_file(STAGE, out, files::EDGES, |w| {
        network::write_edges(w, &tree, tickers)
    })?;
    write_file(STAGE, out, files::DOT, |w| {
        network::write_dot(w, &tree, tickers)
    })?;
    write_file(STAGE, out, files::DEGREES, |w| {
        network::write_degrees(w, &tree, tickers)
    })?;
    write_file(STAGE, out, files::DEGREE_DISTRIBUTION, |w| {
        network::write_degree_distribution(w, &dist_bins)
    })?;

    Ok(NetworkOutcome {
        n: tree.n(),
        edges: tree.edges().len(),
        l_min: tree.min_degree(),
        l_max: tree.max_degree(),
        power_law: network::fit_power_law(&dist_bins).ok(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorsOutcome {
    pub k: usize,
    pub kaiser_k: usize,
    pub rotated: bool,
    pub varimax_sweeps: usize,
    pub leading_eigenvalue: f64,
    pub mean_abs_score_correlation: Option<f64>,
}

pub fn factors(
    source: &InputSource<'_>,
    k: Option<usize>,
    rotate: bool,
    out: &Path,
) -> Result<FactorsOutcome, CliError> {
    const STAGE: &str = "factors";
    let returns = load_returns(STAGE, *source)?;
    let model = factors::extract_factors(&returns, FactorOptions { factors: k, rotate })
        .map_err(CliError::stage(STAGE))?;

    let drift = model
        .rotation
        .gram()
        .sub(&Matrix::identity(model.k))
        .map_err(CliError::stage(STAGE))?;
    if drift.max_abs() > 1e-8 {
        return Err(invariant(
            STAGE,
            format!("rotation not orthogonal ({:e})", drift.max_abs()),
        ));
    }
    if let Some(m) = factors::score_column_means(&model.scores)
        .into_iter()
        .find(|m| m.abs() > 1e-10)
    {
        return Err(invariant(
            STAGE,
            format!("factor score mean {m:e} is not zero"),
        ));
    }
    let report =
        factors::multicollinearity_report(&model.scores).map_err(CliError::stage(STAGE))?;

    write_file(STAGE, out, files::EIGENVALUES, |w| {
        factors::write_scree(w, &model.eigenvalues, model.k)
    })?;
    write_file(STAGE, out, files::LOADINGS, |w| {
        factors::write_loadings(w, returns.tickers(), &model.loadings)
    })?;
    write_file(STAGE, out, files::SCORES, |w| {
        factors::write_scores(w, returns.dates(), &model.scores)
    })?;
    write_file(STAGE, out, files::SCORE_CORRELATIONS, |w| {
        factors::write_score_correlations(w, &report, model.k)
    })?;

    Ok(FactorsOutcome {
        k: model.k,
        kaiser_k: model.kaiser_k,
        rotated: rotate,
        varimax_sweeps: model.varimax_sweeps,
        leading_eigenvalue: model.eigenvalues[0],
        mean_abs_score_correlation: report.mean_abs_offdiag(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressOutcome {
    pub mean_r_squared: f64,
    pub residual_cross_correlation: Option<f64>,
}

pub fn regress(
    source: &InputSource<'_>,
    scores: &Path,
    out: &Path,
) -> Result<RegressOutcome, CliError> {
    const STAGE: &str = "regress";
    let returns = load_returns(STAGE, *source)?;
    let scores = load_scores(STAGE, scores, &returns)?;
    let fits = regression::fit_panel(&returns, &scores).map_err(CliError::stage(STAGE))?;
    write_file(STAGE, out, files::REGRESSION, |w| {
        regression::write_regression(w, &fits)
    })?;
    Ok(RegressOutcome {
        mean_r_squared: fits.iter().map(|f| f.r_squared).sum::<f64>() / fits.len() as f64,
        residual_cross_correlation: regression::residual_cross_correlation(&fits)
            .map_err(CliError::stage(STAGE))?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndustryOutcome {
    pub industries: usize,
    pub rows: Vec<FactorIndustryRow>,
}

fn read_membership(stage: &'static str, path: &Path) -> Result<Membership, CliError> {
    marketstats::read_membership(open(stage, path)?).map_err(CliError::stage(stage))
}

pub fn industry(
    source: &InputSource<'_>,
    membership: &Path,
    scores: &Path,
    out: &Path,
) -> Result<IndustryOutcome, CliError> {
    let membership = read_membership("industry", membership)?;
    industry_with(source, &membership, scores, out)
}

fn industry_with(
    source: &InputSource<'_>,
    membership: &Membership,
    scores: &Path,
    out: &Path,
) -> Result<IndustryOutcome, CliError> {
    const STAGE: &str = "industry";
    let returns = load_returns(STAGE, *source)?;
    let scores = load_scores(STAGE, scores, &returns)?;
    let indexes =
        marketstats::industry_indexes(&returns, membership).map_err(CliError::stage(STAGE))?;
    let rows = marketstats::factor_industry_correlations(&scores, &indexes)
        .map_err(CliError::stage(STAGE))?;
    write_file(STAGE, out, files::INDUSTRY_INDEXES, |w| {
        marketstats::write_industry_indexes(w, returns.dates(), &indexes)
    })?;
    write_file(STAGE, out, files::FACTOR_INDUSTRY, |w| {
        marketstats::write_factor_industry(w, &rows)
    })?;
    Ok(IndustryOutcome {
        industries: indexes.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOutcome {
    pub buckets: usize,
    pub spearman: Option<f64>,
}

pub fn profile(
    degrees: &Path,
    regression_csv: &Path,
    out: &Path,
) -> Result<ProfileOutcome, CliError> {
    const STAGE: &str = "profile";
    let (tickers, degrees) =
        network::read_degrees(open(STAGE, degrees)?).map_err(CliError::stage(STAGE))?;
    let r2 =
        regression::read_r_squared(open(STAGE, regression_csv)?).map_err(CliError::stage(STAGE))?;
    let same_order = tickers.len() == r2.len() && tickers.iter().zip(&r2).all(|(a, (b, _))| a == b);
    if !same_order {
        return Err(CliError::Stage {
            stage: STAGE,
            source: Error::DimensionMismatch(
                "degree and regression tables list different tickers".into(),
            ),
        });
    }
    let r2: Vec<f64> = r2.into_iter().map(|(_, r)| r).collect();
    let prof = marketstats::profile_from_degrees(&degrees, &r2).map_err(CliError::stage(STAGE))?;
    write_file(STAGE, out, files::PROFILE, |w| {
        marketstats::write_profile(w, &prof)
    })?;
    Ok(ProfileOutcome {
        buckets: prof.buckets.len(),
        spearman: prof.degree_spearman(),
    })
}

pub fn synth(
    spec: &SynthSpec,
    format: SynthFormat,
    price_scale: f64,
    out: &Path,
) -> Result<(), CliError> {
    const STAGE: &str = "synth";
    let market = synth::generate(spec).map_err(CliError::stage(STAGE))?;
    match format {
        SynthFormat::Prices => {
            if !(price_scale > 0.0 && price_scale.is_finite()) {
                return Err(CliError::Usage {
                    stage: STAGE,
                    message: format!("price scale {price_scale} must be positive"),
                });
            }
            let prices = synth::prices_from_returns(&market.returns, 100.0, price_scale)
                .map_err(CliError::stage(STAGE))?;
            write_file(STAGE, out, files::PRICES, |w| {
                ingest::write_prices(w, &prices)
            })?;
        }
        SynthFormat::Returns => {
            write_file(STAGE, out, files::RETURNS, |w| {
                ingest::write_returns(w, &market.returns)
            })?;
        }
    }
    let tickers = market.returns.tickers();
    write_file(STAGE, out, files::MEMBERSHIP, |w| {
        marketstats::write_membership(w, tickers, &market.industries)
    })?;
    write_file(STAGE, out, files::TRUE_LOADINGS, |w| {
        factors::write_loadings(w, tickers, &market.true_loadings)
    })?;
    write_file(STAGE, out, files::TRUE_SCORES, |w| {
        factors::write_scores(w, market.returns.dates(), &market.true_scores)
    })?;
    write_file(STAGE, out, files::TRUTH, |w| synth::write_truth(w, &market))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AnalyzeConfig {
    pub prices: PathBuf,
    pub membership: Option<PathBuf>,
    pub industry: bool,
    pub gap_policy: GapPolicy,
    pub out: PathBuf,
    pub factors: Option<usize>,
    pub rotate: bool,
}

/// Runs every stage through the files in `config.out` and writes `summary.txt`.
/// Returns the summary text.
pub fn analyze(config: &AnalyzeConfig) -> Result<String, CliError> {
    const STAGE: &str = "analyze";
    if config.industry && config.membership.is_none() {
        return Err(CliError::Usage {
            stage: STAGE,
            message: "--industry needs --membership".into(),
        });
    }
    let membership = config
        .membership
        .as_deref()
        .map(|p| read_membership("industry", p))
        .transpose()?;

    let out = config.out.as_path();
    let returns = load_returns(
        "ingest",
        InputSource::Prices(&config.prices, config.gap_policy),
    )?;
    let returns_path = write_file("ingest", out, files::RETURNS, |w| {
        ingest::write_returns(w, &returns)
    })?;
    let source = InputSource::Returns(&returns_path);
    let scores_path = out_path(out, files::SCORES);

    let net = network(&source, out)?;
    let fac = factors(&source, config.factors, config.rotate, out)?;
    let reg = regress(&source, &scores_path, out)?;
    let ind = membership
        .as_ref()
        .map(|m| industry_with(&source, m, &scores_path, out))
        .transpose()?;
    let prof = profile(
        &out_path(out, files::DEGREES),
        &out_path(out, files::REGRESSION),
        out,
    )?;

    let text = summary(&returns, &net, &fac, &reg, ind.as_ref(), &prof);
    write_file(STAGE, out, files::SUMMARY, |w| {
        Ok(w.write_all(text.as_bytes())?)
    })?;
    Ok(text)
}

fn opt(v: Option<f64>) -> String {
    v.map(sig).unwrap_or_else(|| "NA".to_string())
}

/// Key-value run summary, one datum per line. Only `timestamp` varies between
/// identical runs.
pub fn summary(
    returns: &ReturnPanel,
    net: &NetworkOutcome,
    fac: &FactorsOutcome,
    reg: &RegressOutcome,
    ind: Option<&IndustryOutcome>,
    prof: &ProfileOutcome,
) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv(
        "timestamp",
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    );
    kv("n_stocks", returns.n_tickers().to_string());
    kv("n_returns", returns.n_dates().to_string());
    kv("first_return_date", returns.dates()[0].to_string());
    kv(
        "last_return_date",
        returns.dates()[returns.n_dates() - 1].to_string(),
    );
    kv("mst_edges", net.edges.to_string());
    kv("l_min", net.l_min.to_string());
    kv("l_max", net.l_max.to_string());
    kv("gamma", opt(net.power_law.map(|f| f.gamma)));
    kv("gamma_r2_loglog", opt(net.power_law.map(|f| f.r2_loglog)));
    kv(
        "gamma_bins",
        net.power_law
            .map_or("NA".into(), |f| f.bins_used.to_string()),
    );
    kv("k_factors", fac.k.to_string());
    kv("kaiser_k", fac.kaiser_k.to_string());
    kv("leading_eigenvalue", sig(fac.leading_eigenvalue));
    kv(
        "rotation",
        if fac.rotated { "varimax" } else { "none" }.to_string(),
    );
    kv("varimax_sweeps", fac.varimax_sweeps.to_string());
    kv(
        "mean_abs_score_correlation",
        opt(fac.mean_abs_score_correlation),
    );
    kv(
        "mean_abs_score_correlation_percent",
        opt(fac.mean_abs_score_correlation.map(|v| 100.0 * v)),
    );
    kv("mean_r_squared_percent", sig(100.0 * reg.mean_r_squared));
    kv(
        "mean_abs_residual_cross_correlation",
        opt(reg.residual_cross_correlation),
    );
    if let Some(ind) = ind {
        kv("industries", ind.industries.to_string());
    }
    kv("degree_buckets", prof.buckets.to_string());
    kv("degree_r2_spearman", opt(prof.spearman));
    kv(
        "degree_normalization",
        "2*(L-L_min)/(L_max-L_min)-1".to_string(),
    );
    kv(
        "degree_normalization_note",
        "maps L_min to -1 and L_max to +1; the form (L-L_min)/(L_max-L_min)-1 would only span [-1,0]"
            .to_string(),
    );
    s
}
