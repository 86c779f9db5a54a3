//! Versioned text persistence for trained models: the reference bank, the
//! head configuration, and the input front end, round-tripping bit-exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::InputMode;
use crate::linalg::DenseMatrix;
use crate::mutual::{
    Activation, HeadConfig, HeadKind, MutualError, RefMode, ReferenceBank, TauMode,
};
use crate::scalar::Scalar;

/// Errors from model serialization and parsing.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Mutual(#[from] MutualError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: unsupported format version `{found}`, expected 1")]
    UnsupportedVersion { path: PathBuf, found: String },
}

/// A complete trained model: everything evaluation needs.
#[derive(Debug, Clone)]
pub struct SavedModel<T> {
    pub bank: ReferenceBank<T>,
    pub head: HeadConfig<T>,
    /// Front end the model was trained with; evaluation must match it.
    pub input_mode: InputMode,
}

impl<T: Scalar> SavedModel<T> {
    /// Architecture token: reference mode crossed with head kind.
    pub fn arch_token(&self) -> &'static str {
        match (self.bank.mode(), &self.head.head) {
            (RefMode::Grassmann, HeadKind::Softmax) => "glmsm-softmax",
            (RefMode::Grassmann, HeadKind::Linear { .. }) => "glmsm-fc",
            (RefMode::Euclidean, HeadKind::Softmax) => "lmsm-softmax",
            (RefMode::Euclidean, HeadKind::Linear { .. }) => "lmsm-fc",
        }
    }

    /// Number of classes the model predicts.
    pub fn class_count(&self) -> usize {
        self.head.class_count(self.bank.len())
    }

    /// Serializes to the `format-version 1` text layout.
    pub fn to_text(&self) -> String {
        let mut out = String::from("format-version 1\n");
        let _ = writeln!(out, "arch {}", self.arch_token());
        let mode = match self.bank.mode() {
            RefMode::Grassmann => "grassmann",
            RefMode::Euclidean => "euclidean",
        };
        let _ = writeln!(out, "mode {mode}");
        let _ = writeln!(out, "epsilon {}", fmt_float(self.bank.epsilon().as_f64()));
        match self.input_mode {
            InputMode::Pca { m } => {
                let _ = writeln!(out, "input pca {m}");
            }
            InputMode::Ac { normalized } => {
                let _ = writeln!(
                    out,
                    "input ac {}",
                    if normalized { "normalized" } else { "raw" }
                );
            }
        }
        let activation = match self.head.activation {
            Activation::Identity => "id",
            Activation::Sqrt => "sqrt",
        };
        let _ = writeln!(out, "activation {activation}");
        let tau_mode = match self.head.tau_mode {
            TauMode::Fixed => "fixed",
            TauMode::Learnable => "learn",
        };
        let _ = writeln!(out, "tau-mode {tau_mode}");
        let _ = writeln!(out, "tau {}", fmt_float(self.head.tau().as_f64()));
        let _ = writeln!(
            out,
            "repulsion {}",
            fmt_float(self.head.repulsion_weight.as_f64())
        );
        let _ = writeln!(out, "reinforce {}", self.head.reinforce);
        let _ = writeln!(
            out,
            "refs {} {} {}",
            self.bank.len(),
            self.bank.ambient_dim(),
            self.bank.sub_dim()
        );
        for (j, r) in self.bank.refs().iter().enumerate() {
            write_matrix(&mut out, &format!("ref{j}"), r);
        }
        match &self.head.head {
            HeadKind::Softmax => {
                let _ = writeln!(out, "head softmax");
            }
            HeadKind::Linear { w, b } => {
                let _ = writeln!(out, "head linear");
                write_matrix(&mut out, "w", w);
                let _ = writeln!(out, "vector b {}", b.len());
                let row: Vec<String> = b.iter().map(|v| fmt_float(v.as_f64())).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out.push_str("end\n");
        out
    }

    /// Writes the model to `path`.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_text()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Parses a model from its text form; `path` is used in diagnostics only.
    pub fn from_text(text: &str, path: &Path) -> Result<Self, ModelError> {
        Parser::new(text, path).parse()
    }

    /// Reads a model written by [`SavedModel::save`].
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text, path)
    }
}

fn fmt_float(value: f64) -> String {
    format!("{value:.16e}")
}

fn write_matrix<T: Scalar>(out: &mut String, name: &str, m: &DenseMatrix<T>) {
    let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols())
            .map(|j| fmt_float(m[(i, j)].as_f64()))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

struct Parser<'a> {
    lines: Vec<&'a str>,
    cursor: usize,
    path: PathBuf,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, path: &Path) -> Self {
        Self {
            lines: text.lines().collect(),
            cursor: 0,
            path: path.to_path_buf(),
        }
    }

    fn fail(&self, reason: String) -> ModelError {
        ModelError::Malformed {
            path: self.path.clone(),
            line: self.cursor,
            reason,
        }
    }

    fn next_line(&mut self) -> Result<&'a str, ModelError> {
        let line = self
            .lines
            .get(self.cursor)
            .copied()
            .ok_or_else(|| self.fail("unexpected end of file".into()))?;
        self.cursor += 1;
        Ok(line.trim_end())
    }

    /// Consumes a `key value...` line, returning the value tokens.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>, ModelError> {
        let line = self.next_line()?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(found) if found == key => Ok(tokens.collect()),
            Some(found) => Err(self.fail(format!("expected `{key}`, found `{found}`"))),
            None => Err(self.fail(format!("expected `{key}`, found empty line"))),
        }
    }

    fn single<V: std::str::FromStr>(&mut self, key: &str) -> Result<V, ModelError> {
        let tokens = self.keyed(key)?;
        match tokens.as_slice() {
            [value] => value
                .parse()
                .map_err(|_| self.fail(format!("bad value `{value}` for `{key}`"))),
            _ => Err(self.fail(format!("`{key}` expects exactly one value"))),
        }
    }

    fn float_row<T: Scalar>(&mut self, cols: usize) -> Result<Vec<T>, ModelError> {
        let line = self.next_line()?;
        let mut values = Vec::with_capacity(cols);
        for token in line.split_whitespace() {
            let value: f64 = token
                .parse()
                .map_err(|_| self.fail(format!("bad float `{token}`")))?;
            values.push(T::cast(value));
        }
        if values.len() != cols {
            return Err(self.fail(format!("expected {cols} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn matrix<T: Scalar>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
    ) -> Result<DenseMatrix<T>, ModelError> {
        let tokens = self.keyed("matrix")?;
        match tokens.as_slice() {
            [found, r, c] => {
                if *found != name {
                    return Err(self.fail(format!("expected matrix `{name}`, found `{found}`")));
                }
                let (r, c): (usize, usize) = (
                    r.parse()
                        .map_err(|_| self.fail(format!("bad row count `{r}`")))?,
                    c.parse()
                        .map_err(|_| self.fail(format!("bad column count `{c}`")))?,
                );
                if (r, c) != (rows, cols) {
                    return Err(self.fail(format!(
                        "matrix `{name}` is {r}x{c}, expected {rows}x{cols}"
                    )));
                }
            }
            _ => {
                return Err(self.fail("matrix header must be `matrix <name> <rows> <cols>`".into()))
            }
        }
        let mut m = DenseMatrix::zeros(rows, cols);
        for i in 0..rows {
            let row = self.float_row::<T>(cols)?;
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    fn parse<T: Scalar>(mut self) -> Result<SavedModel<T>, ModelError> {
        let version = self.next_line()?;
        if version != "format-version 1" {
            return Err(ModelError::UnsupportedVersion {
                path: self.path.clone(),
                found: version.to_string(),
            });
        }
        let arch: String = self.single("arch")?;
        let mode = match self.single::<String>("mode")?.as_str() {
            "grassmann" => RefMode::Grassmann,
            "euclidean" => RefMode::Euclidean,
            other => return Err(self.fail(format!("unknown mode `{other}`"))),
        };
        let epsilon: f64 = self.single("epsilon")?;
        let input_mode = match self.keyed("input")?.as_slice() {
            ["pca", m] => InputMode::Pca {
                m: m.parse()
                    .map_err(|_| self.fail(format!("bad pca dimension `{m}`")))?,
            },
            ["ac", "normalized"] => InputMode::Ac { normalized: true },
            ["ac", "raw"] => InputMode::Ac { normalized: false },
            other => return Err(self.fail(format!("unknown input spec `{}`", other.join(" ")))),
        };
        let activation = match self.single::<String>("activation")?.as_str() {
            "id" => Activation::Identity,
            "sqrt" => Activation::Sqrt,
            other => return Err(self.fail(format!("unknown activation `{other}`"))),
        };
        let tau_mode = match self.single::<String>("tau-mode")?.as_str() {
            "fixed" => TauMode::Fixed,
            "learn" => TauMode::Learnable,
            other => return Err(self.fail(format!("unknown tau-mode `{other}`"))),
        };
        let tau: f64 = self.single("tau")?;
        let repulsion: f64 = self.single("repulsion")?;
        let reinforce: bool = self.single("reinforce")?;

        let (k, d, p) = match self.keyed("refs")?.as_slice() {
            [k, d, p] => {
                let parse = |s: &str, what: &str| -> Result<usize, ModelError> {
                    s.parse()
                        .map_err(|_| self.fail(format!("bad {what} `{s}`")))
                };
                (
                    parse(k, "ref count")?,
                    parse(d, "dimension")?,
                    parse(p, "dimension")?,
                )
            }
            _ => return Err(self.fail("`refs` expects `refs <K> <d> <p>`".into())),
        };
        let mut refs = Vec::with_capacity(k);
        for j in 0..k {
            refs.push(self.matrix::<T>(&format!("ref{j}"), d, p)?);
        }
        let bank = ReferenceBank::new(refs, mode, T::cast(epsilon))?;

        let head_kind = match self.single::<String>("head")?.as_str() {
            "softmax" => HeadKind::Softmax,
            "linear" => {
                let tokens = self.keyed("matrix")?;
                let (rows, cols): (usize, usize) = match tokens.as_slice() {
                    ["w", r, c] => (
                        r.parse()
                            .map_err(|_| self.fail(format!("bad row count `{r}`")))?,
                        c.parse()
                            .map_err(|_| self.fail(format!("bad column count `{c}`")))?,
                    ),
                    _ => return Err(self.fail("expected `matrix w <rows> <cols>`".into())),
                };
                let mut w = DenseMatrix::zeros(rows, cols);
                for i in 0..rows {
                    let row = self.float_row::<T>(cols)?;
                    for (j, v) in row.into_iter().enumerate() {
                        w[(i, j)] = v;
                    }
                }
                let b_len: usize = match self.keyed("vector")?.as_slice() {
                    ["b", len] => len
                        .parse()
                        .map_err(|_| self.fail(format!("bad length `{len}`")))?,
                    _ => return Err(self.fail("expected `vector b <len>`".into())),
                };
                let b = self.float_row::<T>(b_len)?;
                HeadKind::Linear { w, b }
            }
            other => return Err(self.fail(format!("unknown head `{other}`"))),
        };
        let head = HeadConfig::new(
            activation,
            T::cast(tau),
            tau_mode,
            head_kind,
            T::cast(repulsion),
            reinforce,
        )?;
        if self.next_line()? != "end" {
            return Err(self.fail("expected `end`".into()));
        }

        let model = SavedModel {
            bank,
            head,
            input_mode,
        };
        if model.arch_token() != arch {
            return Err(ModelError::Malformed {
                path: self.path,
                line: 2,
                reason: format!(
                    "arch `{arch}` disagrees with mode and head (derived `{}`)",
                    model.arch_token()
                ),
            });
        }
        Ok(model)
    }
}
