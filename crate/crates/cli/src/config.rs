use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mzvms::operators::FluxKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Experiment {
    Greens,
    UpwindEquiv,
    LinearMemory,
    Burgers,
    Advect,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Greens => "greens",
            Experiment::UpwindEquiv => "upwind-equiv",
            Experiment::LinearMemory => "linear-memory",
            Experiment::Burgers => "burgers",
            Experiment::Advect => "advect",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Closure {
    None,
    T,
    Tau,
    Fm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Flux {
    Central,
    Upwind,
}

impl From<Flux> for FluxKind {
    fn from(f: Flux) -> Self {
        match f {
            Flux::Central => FluxKind::Central,
            Flux::Upwind => FluxKind::Upwind,
        }
    }
}

/// Fully resolved experiment settings; what gets written to `config.json`.
///
/// `ptilde` and `nfine` are the coarse and fine resolution of the split:
/// Legendre degrees for DG and global-Legendre runs, wavenumbers for the
/// Fourier Burgers run, and for `greens` `nfine` is the bubble degree of the
/// exact fine-scale solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub c: f64,
    pub nu: f64,
    pub nelem: usize,
    pub ptilde: usize,
    pub nfine: usize,
    pub closure: Closure,
    /// `None` selects the experiment's default memory length.
    pub tau: Option<f64>,
    pub flux: Flux,
    pub dt: f64,
    pub tend: f64,
    pub seed: u64,
    pub jobs: usize,
    /// Quadrature panel counts for the exact memory convolution.
    pub n_s: Vec<usize>,
    /// Evaluation points per element for tabulated kernels.
    pub grid_per_elem: usize,
    /// Parameter grid of the upwind-equivalence sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub ptilde: Vec<usize>,
    pub nelem: Vec<usize>,
    pub c: Vec<f64>,
    pub states: usize,
    /// Fine mode counts for the S2/S1 table (at p~ = 1).
    pub fine_counts: Vec<usize>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            c: 1.0,
            nu: 0.0,
            nelem: 16,
            ptilde: 2,
            nfine: 9,
            closure: Closure::None,
            tau: None,
            flux: Flux::Central,
            dt: 1e-3,
            tend: 1.0,
            seed: 0,
            jobs: 1,
            n_s: vec![64, 128, 256, 512],
            grid_per_elem: 8,
            sweep: None,
        };
        match experiment {
            Experiment::Greens => Self {
                nu: 0.001,
                nfine: 8,
                tau: Some(1.0),
                ..base
            },
            Experiment::UpwindEquiv => Self {
                nfine: 5,
                sweep: Some(Sweep {
                    ptilde: (0..=4).collect(),
                    nelem: vec![4, 8, 16, 32, 64],
                    c: vec![1.0, -1.0, 2.5, -2.5],
                    states: 20,
                    fine_counts: vec![8, 16, 32, 64],
                }),
                ..base
            },
            Experiment::LinearMemory => Self {
                nu: 0.1,
                nelem: 1,
                ptilde: 4,
                nfine: 16,
                dt: 2e-4,
                ..base
            },
            Experiment::Burgers => Self {
                nu: 0.01,
                nelem: 1,
                ptilde: 16,
                nfine: 64,
                closure: Closure::Tau,
                tau: Some(0.1),
                dt: 2e-3,
                tend: 2.0,
                ..base
            },
            Experiment::Advect => Self {
                closure: Closure::Tau,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite, got {v}"))
            }
        };
        if !self.c.is_finite() {
            return Err("c must be finite".into());
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(format!("nu must be non-negative, got {}", self.nu));
        }
        if self.nelem == 0 {
            return Err("nelem must be at least 1".into());
        }
        if self.nfine <= self.ptilde {
            return Err(format!(
                "nfine ({}) must exceed ptilde ({})",
                self.nfine, self.ptilde
            ));
        }
        if let Some(tau) = self.tau {
            positive(tau, "tau")?;
        }
        positive(self.dt, "dt")?;
        positive(self.tend, "tend")?;
        if self.jobs == 0 {
            return Err("jobs must be at least 1".into());
        }
        if self.grid_per_elem == 0 {
            return Err("grid_per_elem must be at least 1".into());
        }
        match self.experiment {
            Experiment::Greens => {
                positive(self.nu, "nu")?;
                if self.nelem < 2 {
                    return Err("greens needs at least two elements".into());
                }
                if self.nfine < 2 {
                    return Err("greens needs nfine >= 2".into());
                }
            }
            Experiment::LinearMemory => {
                positive(self.nu, "nu")?;
                if self.n_s.len() < 3 || self.n_s.iter().any(|&n| n == 0) {
                    return Err("n_s needs at least three positive panel counts".into());
                }
                if self.n_s.windows(2).any(|w| w[1] != 2 * w[0]) {
                    return Err("n_s must double from one entry to the next".into());
                }
            }
            Experiment::Advect => {
                if self.c == 0.0 {
                    return Err("advect needs c != 0".into());
                }
            }
            Experiment::UpwindEquiv => {
                let Some(sw) = &self.sweep else {
                    return Err("upwind-equiv needs a sweep block".into());
                };
                if sw.ptilde.is_empty() || sw.nelem.is_empty() || sw.c.is_empty() || sw.states == 0 {
                    return Err("sweep lists must be nonempty and states positive".into());
                }
                if sw.nelem.contains(&0) || sw.c.iter().any(|c| *c == 0.0 || !c.is_finite()) {
                    return Err("sweep needs nelem >= 1 and finite nonzero c".into());
                }
                if sw.fine_counts.len() < 2 || sw.fine_counts.contains(&0) {
                    return Err("fine_counts needs at least two positive entries".into());
                }
            }
            Experiment::Burgers => {}
        }
        Ok(())
    }
}

/// Per-run flag overrides; every flag falls back to the config file, then to
/// the experiment defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// JSON config file (any subset of the config fields)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub nelem: Option<usize>,
    #[arg(long)]
    pub ptilde: Option<usize>,
    #[arg(long)]
    pub nfine: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub tend: Option<f64>,
    #[arg(long, value_enum)]
    pub closure: Option<Closure>,
    #[arg(long, value_enum)]
    pub flux: Option<Flux>,
}

fn merge_file(config: &mut ExperimentConfig, path: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let patch: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let serde_json::Value::Object(patch) = patch else {
        return Err(format!("{}: expected a JSON object", path.display()));
    };
    let mut value = serde_json::to_value(&*config).map_err(|e| e.to_string())?;
    let target = value.as_object_mut().expect("config serializes to an object");
    for (k, v) in patch {
        if k == "experiment" {
            if v != target[&k] {
                return Err(format!("config file is for experiment {v}, not {}", target[&k]));
            }
            continue;
        }
        target.insert(k, v);
    }
    *config = serde_json::from_value(value).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

pub fn resolve(experiment: Experiment, o: &Overrides) -> Result<ExperimentConfig, String> {
    let mut c = ExperimentConfig::defaults(experiment);
    if let Some(path) = &o.config {
        merge_file(&mut c, path)?;
    }
    macro_rules! take {
        ($($f:ident),*) => { $(if let Some(v) = o.$f { c.$f = v; })* };
    }
    take!(seed, jobs, c, nu, nelem, ptilde, nfine, dt, tend, closure, flux);
    if let Some(tau) = o.tau {
        c.tau = Some(tau);
    }
    // single-value flags narrow the sweep
    if let Some(sw) = c.sweep.as_mut() {
        if let Some(p) = o.ptilde {
            sw.ptilde = vec![p];
        }
        if let Some(n) = o.nelem {
            sw.nelem = vec![n];
        }
        if let Some(v) = o.c {
            sw.c = vec![v];
        }
    }
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for e in Experiment::value_variants() {
            ExperimentConfig::defaults(*e).validate().unwrap();
        }
    }

    #[test]
    fn greens_defaults_match_the_reference_setup() {
        let c = ExperimentConfig::defaults(Experiment::Greens);
        assert_eq!((c.c, c.nu, c.nelem, c.tau), (1.0, 0.001, 16, Some(1.0)));
    }

    #[test]
    fn flags_override_file_and_defaults() {
        let dir = std::env::temp_dir().join(format!("mzvms-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"nu": 0.5, "nelem": 4, "n_s": [8, 16, 32]}"#).unwrap();
        let o = Overrides {
            config: Some(path.clone()),
            nelem: Some(6),
            ..Default::default()
        };
        let c = resolve(Experiment::LinearMemory, &o).unwrap();
        assert_eq!((c.nu, c.nelem, c.n_s.clone()), (0.5, 6, vec![8, 16, 32]));
        std::fs::write(&path, r#"{"bogus": 1}"#).unwrap();
        assert!(resolve(Experiment::LinearMemory, &o).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn invalid_values_are_rejected() {
        let o = Overrides {
            dt: Some(0.0),
            ..Default::default()
        };
        assert!(resolve(Experiment::Advect, &o).is_err());
        let o = Overrides {
            nfine: Some(2),
            ptilde: Some(2),
            ..Default::default()
        };
        assert!(resolve(Experiment::Advect, &o).is_err());
    }
}
