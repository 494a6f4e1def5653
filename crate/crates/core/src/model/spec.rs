use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WidePart {
    None,
    Lr,
    Fm,
    CrossNet { layers: usize },
    Cin { maps: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepPart {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
}

/// Declarative architecture: `logit = wide(x) + deep(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub wide: WidePart,
    pub deep: Option<DeepPart>,
    pub embedding_dim: usize,
}

/// Keys accepted by [`ModelSpec::from_entries`].
pub const SPEC_KEYS: [&str; 5] = ["wide", "deep", "activation", "dropout", "embedding_dim"];

impl ModelSpec {
    fn mlp(hidden: &[usize], dropout: f64) -> Option<DeepPart> {
        Some(DeepPart {
            hidden: hidden.to_vec(),
            activation: Activation::Relu,
            dropout,
        })
    }

    pub fn lr() -> Self {
        ModelSpec {
            wide: WidePart::Lr,
            deep: None,
            embedding_dim: 1,
        }
    }

    pub fn fm(dim: usize) -> Self {
        ModelSpec {
            wide: WidePart::Fm,
            deep: None,
            embedding_dim: dim,
        }
    }

    pub fn dnn(hidden: &[usize], dropout: f64, dim: usize) -> Self {
        ModelSpec {
            wide: WidePart::None,
            deep: Self::mlp(hidden, dropout),
            embedding_dim: dim,
        }
    }

    pub fn wide_deep(hidden: &[usize], dropout: f64, dim: usize) -> Self {
        ModelSpec {
            wide: WidePart::Lr,
            ..Self::dnn(hidden, dropout, dim)
        }
    }

    pub fn deepfm(hidden: &[usize], dropout: f64, dim: usize) -> Self {
        ModelSpec {
            wide: WidePart::Fm,
            ..Self::dnn(hidden, dropout, dim)
        }
    }

    pub fn dcn(layers: usize, hidden: &[usize], dropout: f64, dim: usize) -> Self {
        ModelSpec {
            wide: WidePart::CrossNet { layers },
            ..Self::dnn(hidden, dropout, dim)
        }
    }

    pub fn xdeepfm(maps: &[usize], hidden: &[usize], dropout: f64, dim: usize) -> Self {
        ModelSpec {
            wide: WidePart::Cin {
                maps: maps.to_vec(),
            },
            ..Self::dnn(hidden, dropout, dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wide == WidePart::None && self.deep.is_none() {
            return Err(Error::invalid(
                "model needs a wide part, a deep part, or both",
            ));
        }
        if self.embedding_dim == 0 {
            return Err(Error::invalid("embedding_dim must be at least 1"));
        }
        match &self.wide {
            WidePart::CrossNet { layers: 0 } => {
                return Err(Error::invalid("cross network needs at least one layer"))
            }
            WidePart::Cin { maps } if maps.is_empty() || maps.contains(&0) => {
                return Err(Error::invalid(
                    "CIN needs non-empty, positive feature-map sizes",
                ))
            }
            _ => {}
        }
        if let Some(d) = &self.deep {
            if d.hidden.is_empty() || d.hidden.contains(&0) {
                return Err(Error::invalid(
                    "MLP needs at least one non-empty hidden layer",
                ));
            }
            if !(0.0..1.0).contains(&d.dropout) {
                return Err(Error::invalid(format!(
                    "dropout {} outside [0, 1)",
                    d.dropout
                )));
            }
        }
        Ok(())
    }

    /// Short architecture name used in reports.
    pub fn family(&self) -> &'static str {
        match (&self.wide, self.deep.is_some()) {
            (WidePart::Lr, false) => "LR",
            (WidePart::Fm, false) => "FM",
            (WidePart::None, true) => "DNN",
            (WidePart::Lr, true) => "WideDeep",
            (WidePart::Fm, true) => "DeepFM",
            (WidePart::CrossNet { .. }, true) => "DCN",
            (WidePart::Cin { .. }, true) => "xDeepFM",
            (WidePart::CrossNet { .. }, false) => "CrossNet",
            (WidePart::Cin { .. }, false) => "CIN",
            (WidePart::None, false) => "empty",
        }
    }

    pub fn to_entries(&self) -> Vec<(&'static str, String)> {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let wide = match &self.wide {
            WidePart::None => "none".to_string(),
            WidePart::Lr => "lr".to_string(),
            WidePart::Fm => "fm".to_string(),
            WidePart::CrossNet { layers } => format!("cross:{layers}"),
            WidePart::Cin { maps } => format!("cin:{}", join(maps)),
        };
        let mut out = vec![("wide", wide)];
        match &self.deep {
            None => out.push(("deep", "none".to_string())),
            Some(d) => {
                out.push(("deep", format!("mlp:{}", join(&d.hidden))));
                let act = match d.activation {
                    Activation::Relu => "relu",
                    Activation::Sigmoid => "sigmoid",
                };
                out.push(("activation", act.to_string()));
                out.push(("dropout", d.dropout.to_string()));
            }
        }
        out.push(("embedding_dim", self.embedding_dim.to_string()));
        out
    }

    /// Inverse of [`Self::to_entries`]; rejects unknown keys.
    pub fn from_entries<'k>(entries: impl IntoIterator<Item = (&'k str, &'k str)>) -> Result<Self> {
        let mut wide = None;
        let mut hidden: Option<Option<Vec<usize>>> = None;
        let mut activation = Activation::Relu;
        let mut dropout = 0.0;
        let mut dim = None;
        let list = |v: &str| -> Result<Vec<usize>> {
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad size `{x}`")))
                })
                .collect()
        };
        for (k, v) in entries {
            let v = v.trim();
            match k {
                "wide" => {
                    wide = Some(match v.split_once(':') {
                        None if v == "none" => WidePart::None,
                        None if v == "lr" => WidePart::Lr,
                        None if v == "fm" => WidePart::Fm,
                        Some(("cross", n)) => WidePart::CrossNet {
                            layers: n
                                .trim()
                                .parse()
                                .map_err(|_| Error::invalid(format!("bad cross depth `{n}`")))?,
                        },
                        Some(("cin", maps)) => WidePart::Cin { maps: list(maps)? },
                        _ => return Err(Error::invalid(format!("unknown wide part `{v}`"))),
                    })
                }
                "deep" => {
                    hidden = Some(match v.split_once(':') {
                        None if v == "none" => None,
                        Some(("mlp", sizes)) => Some(list(sizes)?),
                        _ => return Err(Error::invalid(format!("unknown deep part `{v}`"))),
                    })
                }
                "activation" => {
                    activation = match v {
                        "relu" => Activation::Relu,
                        "sigmoid" => Activation::Sigmoid,
                        _ => return Err(Error::invalid(format!("unknown activation `{v}`"))),
                    }
                }
                "dropout" => {
                    dropout = v
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad dropout `{v}`")))?
                }
                "embedding_dim" => {
                    dim = Some(
                        v.parse()
                            .map_err(|_| Error::invalid(format!("bad embedding_dim `{v}`")))?,
                    )
                }
                other => return Err(Error::invalid(format!("unknown model key `{other}`"))),
            }
        }
        let spec = ModelSpec {
            wide: wide.unwrap_or(WidePart::None),
            deep: hidden.flatten().map(|hidden| DeepPart {
                hidden,
                activation,
                dropout,
            }),
            embedding_dim: dim.ok_or_else(|| Error::invalid("model lacks embedding_dim"))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected `key = value`, got `{line}`")))?;
            entries.push((k.trim(), v.trim()));
        }
        Self::from_entries(entries)
    }
}
