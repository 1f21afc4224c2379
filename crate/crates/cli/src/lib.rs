//! Command-line pipeline for stock networks and multi-factor models.
//!
//! Every stage reads its inputs from files and writes its outputs into the
//! output directory; `analyze` runs the stages in order over those same
//! files, so a staged rerun reproduces an `analyze` run byte for byte.

pub mod args;
pub mod error;
pub mod stages;

use std::path::Path;

pub use args::{Cli, Command};
pub use error::{CliError, ExitStatus};

use stages::InputSource;

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(a) => {
            let summary = stages::analyze(&stages::AnalyzeConfig {
                prices: a.prices,
                membership: a.membership,
                industry: a.industry,
                gap_policy: a.gap_policy.into(),
                out: a.out,
                factors: a.factor_opts.factors,
                rotate: !a.factor_opts.no_rotate,
            })?;
            print!("{summary}");
            Ok(())
        }
        Command::Synth(s) => stages::synth(&s.spec(), s.format, s.price_scale, &s.out),
        Command::Network(n) => {
            stages::network(&source(&n.input), &n.out)?;
            Ok(())
        }
        Command::Factors(f) => {
            stages::factors(
                &source(&f.input),
                f.factor_opts.factors,
                !f.factor_opts.no_rotate,
                &f.out,
            )?;
            Ok(())
        }
        Command::Regress(r) => {
            stages::regress(&source(&r.input), &r.scores, &r.out)?;
            Ok(())
        }
        Command::Industry(i) => {
            stages::industry(&source(&i.input), &i.membership, &i.scores, &i.out)?;
            Ok(())
        }
        Command::Profile(p) => {
            stages::profile(&p.degrees, &p.regression, &p.out)?;
            Ok(())
        }
    }
}

fn source(input: &args::InputArgs) -> InputSource<'_> {
    match (&input.prices, &input.returns) {
        (Some(p), _) => InputSource::Prices(p.as_path(), input.gap_policy.into()),
        (None, Some(r)) => InputSource::Returns(r.as_path()),
        (None, None) => unreachable!("clap requires one input"),
    }
}

/// Output file names shared by all stages.
pub mod files {
    pub const RETURNS: &str = "returns.csv";
    pub const EDGES: &str = "mst_edges.csv";
    pub const DOT: &str = "mst.dot";
    pub const DEGREES: &str = "degrees.csv";
    pub const DEGREE_DISTRIBUTION: &str = "degree_distribution.csv";
    pub const EIGENVALUES: &str = "eigenvalues.csv";
    pub const LOADINGS: &str = "loadings.csv";
    pub const SCORES: &str = "scores.csv";
    pub const SCORE_CORRELATIONS: &str = "score_correlations.csv";
    pub const REGRESSION: &str = "regression.csv";
    pub const INDUSTRY_INDEXES: &str = "industry_indexes.csv";
    pub const FACTOR_INDUSTRY: &str = "factor_industry.csv";
    pub const PROFILE: &str = "degree_r2_profile.csv";
    pub const SUMMARY: &str = "summary.txt";

    pub const PRICES: &str = "prices.csv";
    pub const MEMBERSHIP: &str = "membership.csv";
    pub const TRUE_LOADINGS: &str = "true_loadings.csv";
    pub const TRUE_SCORES: &str = "true_scores.csv";
    pub const TRUTH: &str = "truth.csv";
}

pub(crate) fn out_path(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join(name)
}
