//! Flag resolution. Every tunable is optional on the command line, may come
//! from a `key = value` config file instead, and otherwise falls back to the
//! documented default. Command-line values win over the file. The fully
//! resolved set is what the run manifest records, so a manifest's `config`
//! block can be replayed as a config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::Serialize;

use fdrecon_core::losses::{FdRegConfig, LossConfig, LossWeights, Variant};
use fdrecon_core::sampling::BatchConfig;
use fdrecon_core::siren::SirenConfig;
use fdrecon_core::trainer::TrainConfig;

// Desk-scale training defaults: small enough that a reconstruction finishes
// in minutes on one CPU core, large enough to hit the smoke-test metric
// targets. Paper-scale values (width 256, 20k-point batches) are reachable
// through the same flags.
const DEFAULT_WIDTH: usize = 32;
const DEFAULT_DEPTH: usize = 4;
const DEFAULT_SURFACE_BATCH: usize = 300;
const DEFAULT_OFFSURFACE_BATCH: usize = 300;
const DEFAULT_MC_RES: usize = 128;
const DEFAULT_EVAL_MC_RES: usize = 64;
const DEFAULT_METRIC_SAMPLES: usize = 50_000;
const DEFAULT_F1_THRESHOLD: f64 = 0.005;
const DEFAULT_MAX_ITERS: usize = 3000;

/// Parsed `key = value` lines. `#` starts a comment; keys are long flag
/// names without the leading dashes.
pub struct KeyVals {
    path: String,
    map: BTreeMap<String, (String, usize)>,
}

impl KeyVals {
    pub fn empty() -> KeyVals {
        KeyVals {
            path: String::new(),
            map: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<KeyVals> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                bail!("{}:{line}: expected `key = value`, got {content:?}", path.display());
            };
            let key = key.trim().to_string();
            if map.insert(key.clone(), (value.trim().to_string(), line)).is_some() {
                bail!("{}:{line}: duplicate key {key:?}", path.display());
            }
        }
        Ok(KeyVals {
            path: path.display().to_string(),
            map,
        })
    }

    /// Remove and parse one key, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((value, line)) => match value.parse() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("{}:{line}: invalid {key} value {value:?}: {e}", self.path),
            },
        }
    }

    /// Error out on unrecognized keys so typos never pass silently.
    pub fn finish(self) -> anyhow::Result<()> {
        if let Some((key, (_, line))) = self.map.iter().next() {
            bail!("{}:{line}: unknown config key {key:?}", self.path);
        }
        Ok(())
    }
}

fn pick<T: FromStr + Clone>(
    flag: &Option<T>,
    file: &mut KeyVals,
    key: &str,
    default: T,
) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    // Consume the file entry even when a flag shadows it, so a key being
    // overridden on the command line is not misreported as unknown.
    let from_file = file.take(key)?;
    Ok(match flag {
        Some(v) => v.clone(),
        None => from_file.unwrap_or(default),
    })
}

/// All training and evaluation tunables shared by `reconstruct` and
/// `sweep-lambda`.
#[derive(clap::Args, Clone, Debug, Default)]
pub struct TrainFlags {
    /// `key = value` config file; command-line flags override it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Curvature regularizer: `ncr-fd` (Gaussian curvature) or `nsh-fd`
    /// (projected-Hessian determinant) [default: ncr-fd]
    #[arg(long)]
    pub variant: Option<String>,

    /// Curvature term weight λ_fd [default: 1]
    #[arg(long)]
    pub lambda_fd: Option<f64>,

    /// Data (zero-set anchor) term weight [default: 3000]
    #[arg(long)]
    pub lambda_dm: Option<f64>,

    /// Off-surface penalty weight [default: 100]
    #[arg(long)]
    pub lambda_dnm: Option<f64>,

    /// Eikonal term weight [default: 50]
    #[arg(long)]
    pub lambda_eik: Option<f64>,

    /// Sharpness of the off-surface penalty exp(−α|f|) [default: 100]
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Stencil step h in normalized coordinates [default: 0.01]
    #[arg(long)]
    pub fd_step: Option<f64>,

    /// Std-dev of the shell perturbation around surface samples
    /// [default: 0.01]
    #[arg(long)]
    pub shell_sigma: Option<f64>,

    /// Divide the Gaussian-curvature stencil by the full ‖∇f‖⁴ instead of
    /// the near-surface simplification [default: false]
    #[arg(long, value_name = "BOOL")]
    pub full_denominator: Option<bool>,

    /// Adam learning rate [default: 5e-5]
    #[arg(long)]
    pub lr: Option<f64>,

    /// Iteration budget [default: 3000]
    #[arg(long)]
    pub max_iters: Option<usize>,

    /// Stop after this many iterations without Chamfer improvement
    /// [default: 1500]
    #[arg(long)]
    pub patience: Option<usize>,

    /// Iterations between Chamfer evaluations [default: 100]
    #[arg(long)]
    pub eval_every: Option<usize>,

    /// Surface samples per iteration [default: 300]
    #[arg(long)]
    pub surface_batch: Option<usize>,

    /// Uniform off-surface samples per iteration [default: 300]
    #[arg(long)]
    pub offsurface_batch: Option<usize>,

    /// Hidden width of the sinusoidal MLP [default: 32]
    #[arg(long)]
    pub width: Option<usize>,

    /// Number of sine layers [default: 4]
    #[arg(long)]
    pub depth: Option<usize>,

    /// Marching-cubes resolution of the final extraction [default: 128]
    #[arg(long)]
    pub mc_res: Option<usize>,

    /// Marching-cubes resolution of the periodic Chamfer evaluation
    /// [default: 64]
    #[arg(long)]
    pub eval_mc_res: Option<usize>,

    /// Held-out subsample size for the periodic evaluation [default: 10000]
    #[arg(long)]
    pub eval_points: Option<usize>,

    /// Points resampled from the final mesh for metrics [default: 50000]
    #[arg(long)]
    pub metric_samples: Option<usize>,

    /// Distance threshold for the F1 score [default: 0.005]
    #[arg(long)]
    pub f1_threshold: Option<f64>,

    /// Root seed for init, batching, and evaluation subsampling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads; 0 uses all cores [default: 0]
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Every tunable with its final value; serialized into the manifest under
/// the flag names.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ResolvedTrain {
    pub variant: String,
    pub lambda_fd: f64,
    pub lambda_dm: f64,
    pub lambda_dnm: f64,
    pub lambda_eik: f64,
    pub alpha: f64,
    pub fd_step: f64,
    pub shell_sigma: f64,
    pub full_denominator: bool,
    pub lr: f64,
    pub max_iters: usize,
    pub patience: usize,
    pub eval_every: usize,
    pub surface_batch: usize,
    pub offsurface_batch: usize,
    pub width: usize,
    pub depth: usize,
    pub mc_res: usize,
    pub eval_mc_res: usize,
    pub eval_points: usize,
    pub metric_samples: usize,
    pub f1_threshold: f64,
    pub seed: u64,
    pub threads: usize,
}

impl TrainFlags {
    pub fn resolve(&self) -> anyhow::Result<ResolvedTrain> {
        let mut file = match &self.config {
            Some(p) => KeyVals::load(p)?,
            None => KeyVals::empty(),
        };
        let tc = TrainConfig::default();
        let weights = LossWeights::default();
        let fd = FdRegConfig::default();
        let lc = LossConfig::default();

        let variant: String = pick(&self.variant, &mut file, "variant", Variant::NcrFd.to_string())?;
        variant
            .parse::<Variant>()
            .with_context(|| format!("invalid --variant {variant:?}"))?;

        let resolved = ResolvedTrain {
            variant,
            lambda_fd: pick(&self.lambda_fd, &mut file, "lambda-fd", weights.lambda_fd)?,
            lambda_dm: pick(&self.lambda_dm, &mut file, "lambda-dm", weights.lambda_dm)?,
            lambda_dnm: pick(&self.lambda_dnm, &mut file, "lambda-dnm", weights.lambda_dnm)?,
            lambda_eik: pick(&self.lambda_eik, &mut file, "lambda-eik", weights.lambda_eik)?,
            alpha: pick(&self.alpha, &mut file, "alpha", lc.alpha)?,
            fd_step: pick(&self.fd_step, &mut file, "fd-step", fd.fd_step)?,
            shell_sigma: pick(&self.shell_sigma, &mut file, "shell-sigma", tc.batch.shell_sigma)?,
            full_denominator: pick(
                &self.full_denominator,
                &mut file,
                "full-denominator",
                fd.full_denominator,
            )?,
            lr: pick(&self.lr, &mut file, "lr", tc.lr)?,
            max_iters: pick(&self.max_iters, &mut file, "max-iters", DEFAULT_MAX_ITERS)?,
            patience: pick(&self.patience, &mut file, "patience", tc.patience)?,
            eval_every: pick(&self.eval_every, &mut file, "eval-every", tc.eval_every)?,
            surface_batch: pick(
                &self.surface_batch,
                &mut file,
                "surface-batch",
                DEFAULT_SURFACE_BATCH,
            )?,
            offsurface_batch: pick(
                &self.offsurface_batch,
                &mut file,
                "offsurface-batch",
                DEFAULT_OFFSURFACE_BATCH,
            )?,
            width: pick(&self.width, &mut file, "width", DEFAULT_WIDTH)?,
            depth: pick(&self.depth, &mut file, "depth", DEFAULT_DEPTH)?,
            mc_res: pick(&self.mc_res, &mut file, "mc-res", DEFAULT_MC_RES)?,
            eval_mc_res: pick(&self.eval_mc_res, &mut file, "eval-mc-res", DEFAULT_EVAL_MC_RES)?,
            eval_points: pick(&self.eval_points, &mut file, "eval-points", tc.eval_points)?,
            metric_samples: pick(
                &self.metric_samples,
                &mut file,
                "metric-samples",
                DEFAULT_METRIC_SAMPLES,
            )?,
            f1_threshold: pick(
                &self.f1_threshold,
                &mut file,
                "f1-threshold",
                DEFAULT_F1_THRESHOLD,
            )?,
            seed: pick(&self.seed, &mut file, "seed", tc.seed)?,
            threads: pick(&self.threads, &mut file, "threads", 0)?,
        };
        file.finish()?;
        Ok(resolved)
    }
}

impl ResolvedTrain {
    pub fn variant(&self) -> Variant {
        self.variant.parse().expect("validated during resolution")
    }

    pub fn to_configs(&self) -> (TrainConfig, SirenConfig) {
        let train = TrainConfig {
            lr: self.lr,
            max_iters: self.max_iters,
            patience: self.patience,
            eval_every: self.eval_every,
            batch: BatchConfig {
                surface: self.surface_batch,
                offsurface: self.offsurface_batch,
                shell_sigma: self.shell_sigma,
            },
            loss: LossConfig {
                weights: LossWeights {
                    lambda_dm: self.lambda_dm,
                    lambda_dnm: self.lambda_dnm,
                    lambda_eik: self.lambda_eik,
                    lambda_fd: self.lambda_fd,
                },
                alpha: self.alpha,
                fd: FdRegConfig {
                    variant: self.variant(),
                    fd_step: self.fd_step,
                    full_denominator: self.full_denominator,
                },
            },
            eval_mc_res: self.eval_mc_res,
            eval_points: self.eval_points,
            seed: self.seed,
        };
        let net = SirenConfig {
            depth: self.depth,
            width: self.width,
            omega0: 30.0,
        };
        (train, net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn flags() -> TrainFlags {
        TrainFlags::default()
    }

    #[test]
    fn defaults_materialize_without_a_config_file() {
        let r = flags().resolve().unwrap();
        assert_eq!(r.variant, "ncr-fd");
        assert_eq!(r.lambda_fd, 1.0);
        assert_eq!(r.lambda_dm, 3000.0);
        assert_eq!(r.lambda_eik, 50.0);
        assert_eq!(r.lr, 5e-5);
        assert_eq!(r.width, 32);
        assert_eq!(r.max_iters, 3000);
        let (tc, sc) = r.to_configs();
        tc.validate().unwrap();
        assert_eq!(sc.omega0, 30.0);
    }

    fn write_config(lines: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(lines.as_bytes()).unwrap();
        f
    }

    #[test]
    fn file_values_apply_and_flags_override_them() {
        let f = write_config("lambda-fd = 2.5\nvariant = nsh-fd # comment\n\n# full line\nwidth=16\n");
        let mut fl = flags();
        fl.config = Some(f.path().to_path_buf());
        let r = fl.resolve().unwrap();
        assert_eq!(r.lambda_fd, 2.5);
        assert_eq!(r.variant, "nsh-fd");
        assert_eq!(r.width, 16);

        let mut fl = flags();
        fl.config = Some(f.path().to_path_buf());
        fl.lambda_fd = Some(7.0);
        assert_eq!(fl.resolve().unwrap().lambda_fd, 7.0);
    }

    #[test]
    fn unknown_and_malformed_config_keys_are_rejected() {
        let f = write_config("lambda-ffd = 2.5\n");
        let mut fl = flags();
        fl.config = Some(f.path().to_path_buf());
        let err = fl.resolve().unwrap_err().to_string();
        assert!(err.contains("lambda-ffd"), "{err}");

        let f = write_config("just words\n");
        let mut fl = flags();
        fl.config = Some(f.path().to_path_buf());
        let err = fl.resolve().unwrap_err().to_string();
        assert!(err.contains("key = value"), "{err}");

        let f = write_config("lr = fast\n");
        let mut fl = flags();
        fl.config = Some(f.path().to_path_buf());
        let err = fl.resolve().unwrap_err().to_string();
        assert!(err.contains("invalid lr"), "{err}");
    }

    #[test]
    fn bad_variant_is_rejected_at_resolution() {
        let mut fl = flags();
        fl.variant = Some("ncr".into());
        assert!(fl.resolve().is_err());
    }
}
