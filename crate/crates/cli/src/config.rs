//! Run configuration: a TOML file whose values can be overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use irtkit::dataio::{LabelConfig, SourceFormat};
use irtkit::dkt::{DktHyperparams, DktLabels};
use irtkit::eval::{ModelFamily, ModelSpec, SweepGrid};
use irtkit::irt::FitOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub fit: FitSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_field: Option<String>,
    pub keep_duplicates: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compressed_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minibatch_students: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_unroll: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity_projection: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_tolerance: Option<f64>,
}

/// Explicit sweep grids; a family without one uses the built-in grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<Vec<f64>>,
    /// `[sigma2, tau2]` pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_tau2: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<usize>>,
    /// `[compressed_dim, hidden_dim, dropout_p]` triples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dkt: Option<Vec<(usize, usize, f64)>>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        match &self.dataset.path {
            Some(p) => Ok(p),
            None => bail!("no dataset given (use --in or dataset.path)"),
        }
    }

    pub fn format(&self) -> Result<SourceFormat> {
        let f = self.dataset.format.as_deref().unwrap_or("canonical");
        let format: SourceFormat = f.parse()?;
        if format == SourceFormat::Synthetic {
            bail!("format `synthetic` cannot be loaded from a file");
        }
        Ok(format)
    }

    pub fn labels(&self, format: SourceFormat) -> LabelConfig {
        let mut labels = match format {
            SourceFormat::Kdd => LabelConfig::kdd_default(),
            _ => LabelConfig::assistments_default(),
        };
        if let Some(f) = &self.dataset.item_field {
            labels.item_field = f.clone();
        }
        if let Some(g) = &self.dataset.group_field {
            labels.group_field = Some(g.clone()).filter(|g| !g.is_empty());
        }
        labels
    }

    pub fn out_dir(&self) -> Result<&Path> {
        match &self.out_dir {
            Some(p) => Ok(p),
            None => bail!("no output directory given (use --out-dir or out_dir)"),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        let mut opts = FitOptions::default();
        if let Some(n) = self.fit.max_iterations {
            opts.max_iterations = n;
        }
        if let Some(t) = self.fit.gradient_tolerance {
            opts.gradient_tolerance = t;
        }
        opts
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

impl ModelSection {
    pub fn family(&self) -> Result<ModelFamily> {
        match &self.family {
            Some(f) => Ok(f.parse()?),
            None => bail!("no model given (use --model or model.family)"),
        }
    }

    fn present(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut check = |set: bool, name| {
            if set {
                out.push(name);
            }
        };
        check(self.sigma2.is_some(), "sigma2");
        check(self.tau2.is_some(), "tau2");
        check(self.gamma2.is_some(), "gamma2");
        check(self.w.is_some(), "w");
        check(self.compressed_dim.is_some(), "compressed_dim");
        check(self.hidden_dim.is_some(), "hidden_dim");
        check(self.dropout_p.is_some(), "dropout_p");
        check(self.step_size.is_some(), "step_size");
        check(self.minibatch_students.is_some(), "minibatch_students");
        check(self.epochs.is_some(), "epochs");
        check(self.seed.is_some(), "seed");
        check(self.max_unroll.is_some(), "max_unroll");
        check(self.labels.is_some(), "labels");
        check(self.identity_projection.is_some(), "identity_projection");
        out
    }

    /// Rejects hyperparameters that do not belong to the family. With
    /// `for_sweep`, the family's swept hyperparameters are rejected too.
    pub fn validate(&self, for_sweep: bool) -> Result<ModelFamily> {
        let family = self.family()?;
        let allowed: &[&str] = match family {
            ModelFamily::Irt | ModelFamily::Constant => &[],
            ModelFamily::Hirt => &["sigma2", "tau2"],
            ModelFamily::Tirt => &["gamma2"],
            ModelFamily::Window => &["w"],
            ModelFamily::Dkt => &[
                "compressed_dim",
                "hidden_dim",
                "dropout_p",
                "step_size",
                "minibatch_students",
                "epochs",
                "seed",
                "max_unroll",
                "labels",
                "identity_projection",
            ],
        };
        let foreign: Vec<&str> = self.present().into_iter().filter(|k| !allowed.contains(k)).collect();
        if !foreign.is_empty() {
            bail!("hyperparameters {} do not apply to model `{family}`", foreign.join(", "));
        }
        if for_sweep {
            let swept: &[&str] = match family {
                ModelFamily::Hirt => &["sigma2", "tau2"],
                ModelFamily::Tirt => &["gamma2"],
                ModelFamily::Window => &["w"],
                ModelFamily::Dkt => &["compressed_dim", "hidden_dim", "dropout_p"],
                _ => &[],
            };
            if let Some(k) = self.present().into_iter().find(|k| swept.contains(k)) {
                bail!("`{k}` is swept; set its values under [sweep] instead");
            }
        }
        Ok(family)
    }

    pub fn dkt_hyperparams(&self) -> Result<DktHyperparams> {
        let d = DktHyperparams::default();
        let labels = match self.labels.as_deref() {
            None | Some("item") => DktLabels::Item,
            Some("group") => DktLabels::Group,
            Some(other) => bail!("labels must be `item` or `group`, got `{other}`"),
        };
        Ok(DktHyperparams {
            compressed_dim: self.compressed_dim.unwrap_or(d.compressed_dim),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            dropout_p: self.dropout_p.unwrap_or(d.dropout_p),
            step_size: self.step_size.unwrap_or(d.step_size),
            minibatch_students: self.minibatch_students.unwrap_or(d.minibatch_students),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed: self.seed.unwrap_or(d.seed),
            max_unroll: self.max_unroll.unwrap_or(d.max_unroll),
            labels,
            identity_projection: self.identity_projection.unwrap_or(d.identity_projection),
        })
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let family = self.validate(false)?;
        let need = |v: Option<f64>, name: &str| match v {
            Some(v) => Ok(v),
            None => bail!("model `{family}` needs --{}", name.replace('_', "-")),
        };
        Ok(match family {
            ModelFamily::Irt => ModelSpec::Irt,
            ModelFamily::Constant => ModelSpec::Constant,
            ModelFamily::Hirt => ModelSpec::Hirt { sigma2: need(self.sigma2, "sigma2")?, tau2: need(self.tau2, "tau2")? },
            ModelFamily::Tirt => ModelSpec::Tirt { gamma2: need(self.gamma2, "gamma2")? },
            ModelFamily::Window => match self.w {
                Some(w) if w > 0 => ModelSpec::Window { w },
                _ => bail!("model `window` needs a positive --w"),
            },
            ModelFamily::Dkt => ModelSpec::Dkt(self.dkt_hyperparams()?),
        })
    }

    /// The section that reproduces `spec`, e.g. for a sweep's best point.
    pub fn from_spec(spec: &ModelSpec) -> Self {
        let mut m = ModelSection { family: Some(spec.family().to_string()), ..Default::default() };
        match spec {
            ModelSpec::Irt | ModelSpec::Constant => {}
            ModelSpec::Hirt { sigma2, tau2 } => {
                m.sigma2 = Some(*sigma2);
                m.tau2 = Some(*tau2);
            }
            ModelSpec::Tirt { gamma2 } => m.gamma2 = Some(*gamma2),
            ModelSpec::Window { w } => m.w = Some(*w),
            ModelSpec::Dkt(hp) => {
                m.compressed_dim = Some(hp.compressed_dim);
                m.hidden_dim = Some(hp.hidden_dim);
                m.dropout_p = Some(hp.dropout_p);
                m.step_size = Some(hp.step_size);
                m.minibatch_students = Some(hp.minibatch_students);
                m.epochs = Some(hp.epochs);
                m.seed = Some(hp.seed);
                m.max_unroll = Some(hp.max_unroll);
                m.labels = Some(match hp.labels {
                    DktLabels::Item => "item".into(),
                    DktLabels::Group => "group".into(),
                });
                m.identity_projection = Some(hp.identity_projection);
            }
        }
        m
    }
}

impl SweepSection {
    pub fn grid(&self, model: &ModelSection) -> Result<SweepGrid> {
        let family = model.validate(true)?;
        let base = model.dkt_hyperparams()?;
        let points: Option<Vec<ModelSpec>> = match family {
            ModelFamily::Tirt => self.gamma2.as_ref().map(|v| v.iter().map(|&gamma2| ModelSpec::Tirt { gamma2 }).collect()),
            ModelFamily::Hirt => self
                .sigma2_tau2
                .as_ref()
                .map(|v| v.iter().map(|&[sigma2, tau2]| ModelSpec::Hirt { sigma2, tau2 }).collect()),
            ModelFamily::Window => self.w.as_ref().map(|v| v.iter().map(|&w| ModelSpec::Window { w }).collect()),
            ModelFamily::Dkt => self.dkt.as_ref().map(|v| {
                v.iter()
                    .map(|&(c, h, p)| {
                        ModelSpec::Dkt(DktHyperparams { compressed_dim: c, hidden_dim: h, dropout_p: p, ..base.clone() })
                    })
                    .collect()
            }),
            ModelFamily::Irt | ModelFamily::Constant => None,
        };
        Ok(match points {
            Some(p) => SweepGrid::new(p)?,
            None => SweepGrid::default_for(family, &base),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_echoes() {
        let text = r#"
seed = 3
[dataset]
path = "data.csv"
[model]
family = "hirt"
sigma2 = 0.125
tau2 = 0.5
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.model.spec().unwrap(), ModelSpec::Hirt { sigma2: 0.125, tau2: 0.5 });
        let again: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_foreign_and_unknown_keys() {
        let m = ModelSection { family: Some("irt".into()), gamma2: Some(0.1), ..Default::default() };
        assert!(m.spec().unwrap_err().to_string().contains("gamma2"));
        assert!(toml::from_str::<RunConfig>("[model]\nfamily = \"irt\"\nbogus = 1\n").is_err());
        let m = ModelSection { family: Some("tirt".into()), ..Default::default() };
        assert!(m.spec().is_err());
        let m = ModelSection { family: Some("tirt".into()), gamma2: Some(0.1), ..Default::default() };
        assert!(m.validate(true).is_err());
    }

    #[test]
    fn best_point_round_trips() {
        let spec = ModelSpec::Dkt(DktHyperparams { hidden_dim: 7, ..Default::default() });
        assert_eq!(ModelSection::from_spec(&spec).spec().unwrap(), spec);
        let spec = ModelSpec::Tirt { gamma2: 0.01 };
        assert_eq!(ModelSection::from_spec(&spec).spec().unwrap(), spec);
    }

    #[test]
    fn explicit_and_default_grids() {
        let m = ModelSection { family: Some("tirt".into()), ..Default::default() };
        let s = SweepSection { gamma2: Some(vec![0.5]), ..Default::default() };
        assert_eq!(s.grid(&m).unwrap().points, [ModelSpec::Tirt { gamma2: 0.5 }]);
        assert_eq!(SweepSection::default().grid(&m).unwrap().points.len(), 6);
    }
}
