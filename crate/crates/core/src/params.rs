//! On-disk formats for fitted parameters.
//!
//! IRT-family parameters are a versioned header of `# key=value` lines followed
//! by a `kind,id,value` CSV. DKT checkpoints are a versioned header followed by
//! dense row-major matrix blocks. Floats are written in Rust's shortest
//! round-trip form, so reading a file back reproduces every bit.

use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};

use ndarray::{Array1, Array2};

use crate::dataio::Dataset;
use crate::dkt::{DktParameters, Projection};
use crate::error::{Error, Result};
use crate::irt::{HirtParameters, IrtParameters};

const PARAMS_MAGIC: &str = "# irtkit-params v1";
const DKT_MAGIC: &str = "# irtkit-dkt v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Theta,
    Beta,
    Mu,
}

impl ParamKind {
    fn as_str(self) -> &'static str {
        match self {
            ParamKind::Theta => "theta",
            ParamKind::Beta => "beta",
            ParamKind::Mu => "mu",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "theta" => Ok(ParamKind::Theta),
            "beta" => Ok(ParamKind::Beta),
            "mu" => Ok(ParamKind::Mu),
            other => Err(Error::ParamFile(format!("unknown parameter kind `{other}`"))),
        }
    }
}

/// A parsed IRT-family parameter file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterFile {
    /// `irt`, `hirt` or `tirt`.
    pub model: String,
    /// Hyperparameters in file order, e.g. `("sigma2", 0.125)`.
    pub hyper: Vec<(String, f64)>,
    pub index_hash: String,
    pub rows: Vec<(ParamKind, String, f64)>,
}

impl ParameterFile {
    pub fn from_irt(model: &str, hyper: Vec<(String, f64)>, p: &IrtParameters, d: &Dataset) -> Self {
        let mut rows = Vec::with_capacity(p.theta.len() + p.beta.len());
        for (s, &v) in p.theta.iter().enumerate() {
            rows.push((ParamKind::Theta, d.students().name(s as u32).to_owned(), v));
        }
        for (i, &v) in p.beta.iter().enumerate() {
            rows.push((ParamKind::Beta, d.items().name(i as u32).to_owned(), v));
        }
        Self { model: model.to_owned(), hyper, index_hash: d.index_hash(), rows }
    }

    pub fn from_hirt(p: &HirtParameters, d: &Dataset) -> Self {
        let hyper = vec![("sigma2".to_owned(), p.sigma2), ("tau2".to_owned(), p.tau2)];
        let mut f = Self::from_irt("hirt", hyper, &p.as_irt(), d);
        for (j, &v) in p.mu.iter().enumerate() {
            f.rows.push((ParamKind::Mu, d.groups().name(j as u32).to_owned(), v));
        }
        f
    }

    pub fn hyper(&self, key: &str) -> Option<f64> {
        self.hyper.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }

    fn values(&self, kind: ParamKind, index: &crate::dataio::IdIndex) -> Result<Vec<f64>> {
        let mut out = vec![0.0; index.len()];
        for (k, id, v) in &self.rows {
            if *k != kind {
                continue;
            }
            let i = index.get(id).ok_or_else(|| {
                Error::ParamFile(format!("{} id `{id}` not in dataset", kind.as_str()))
            })?;
            out[i as usize] = *v;
        }
        Ok(out)
    }

    /// Maps rows back onto the dataset's indices. Ids absent from the file stay
    /// at the prior mean 0.
    pub fn to_irt(&self, d: &Dataset) -> Result<IrtParameters> {
        Ok(IrtParameters {
            theta: self.values(ParamKind::Theta, d.students())?,
            beta: self.values(ParamKind::Beta, d.items())?,
        })
    }

    pub fn to_hirt(&self, d: &Dataset) -> Result<HirtParameters> {
        let get = |k| self.hyper(k).ok_or_else(|| Error::ParamFile(format!("missing `{k}`")));
        Ok(HirtParameters {
            theta: self.values(ParamKind::Theta, d.students())?,
            beta: self.values(ParamKind::Beta, d.items())?,
            mu: self.values(ParamKind::Mu, d.groups())?,
            sigma2: get("sigma2")?,
            tau2: get("tau2")?,
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{PARAMS_MAGIC}")?;
        writeln!(w, "# model={}", self.model)?;
        for (k, v) in &self.hyper {
            writeln!(w, "# hyper.{k}={v:?}")?;
        }
        writeln!(w, "# index_hash={}", self.index_hash)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["kind", "id", "value"])?;
        for (kind, id, v) in &self.rows {
            csv.write_record([kind.as_str(), id.as_str(), &format!("{v:?}")])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = std::io::BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != PARAMS_MAGIC {
            return Err(Error::ParamFile("missing or unsupported version header".into()));
        }
        let mut model = None;
        let mut hyper = Vec::new();
        let mut index_hash = String::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::ParamFile("truncated header".into()));
            }
            let Some(rest) = line.trim_end().strip_prefix("# ") else { break };
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| Error::ParamFile(format!("bad header line `{rest}`")))?;
            match k {
                "model" => model = Some(v.to_owned()),
                "index_hash" => index_hash = v.to_owned(),
                k => {
                    let name = k.strip_prefix("hyper.").ok_or_else(|| {
                        Error::ParamFile(format!("unknown header key `{k}`"))
                    })?;
                    hyper.push((name.to_owned(), parse_f64(v)?));
                }
            }
        }
        if line.trim_end() != "kind,id,value" {
            return Err(Error::ParamFile("missing `kind,id,value` header".into()));
        }
        let mut rows = Vec::new();
        let mut csv = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        for rec in csv.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::ParamFile("expected 3 fields per row".into()));
            }
            rows.push((ParamKind::parse(&rec[0])?, rec[1].to_owned(), parse_f64(&rec[2])?));
        }
        Ok(Self {
            model: model.ok_or_else(|| Error::ParamFile("missing model".into()))?,
            hyper,
            index_hash,
            rows,
        })
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::ParamFile(format!("bad number `{s}`")))
}

fn write_matrix(out: &mut String, name: &str, m: &Array2<f64>) {
    let _ = writeln!(out, "[{name} {} {}]", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
}

/// Serializes a DKT checkpoint.
pub fn write_dkt<W: Write>(p: &DktParameters, mut w: W) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{DKT_MAGIC}");
    let _ = writeln!(s, "n_items={}", p.n_items);
    let _ = writeln!(s, "compressed_dim={}", p.compressed_dim());
    let _ = writeln!(s, "hidden_dim={}", p.hidden_dim());
    let _ = writeln!(s, "seed={}", p.seed);
    let _ = writeln!(s, "dropout_p={:?}", p.dropout_p);
    match &p.projection {
        Projection::Identity => {
            let _ = writeln!(s, "projection=identity");
        }
        Projection::Dense(m) => {
            let _ = writeln!(s, "projection=dense");
            write_matrix(&mut s, "projection", m);
        }
    }
    write_matrix(&mut s, "w_xh", &p.w_xh);
    write_matrix(&mut s, "w_hh", &p.w_hh);
    write_matrix(&mut s, "w_hy", &p.w_hy);
    write_matrix(&mut s, "b_h", &p.b_h.clone().insert_axis(ndarray::Axis(0)));
    write_matrix(&mut s, "b_y", &p.b_y.clone().insert_axis(ndarray::Axis(0)));
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_dkt<R: Read>(mut r: R) -> Result<DktParameters> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines();
    if lines.next() != Some(DKT_MAGIC) {
        return Err(Error::ParamFile("missing or unsupported DKT header".into()));
    }
    let mut header = std::collections::HashMap::new();
    let mut pending = None;
    for line in lines.by_ref() {
        if line.starts_with('[') {
            pending = Some(line);
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::ParamFile(format!("bad header line `{line}`")))?;
        header.insert(k.to_owned(), v.to_owned());
    }
    let get = |k: &str| {
        header.get(k).cloned().ok_or_else(|| Error::ParamFile(format!("missing `{k}`")))
    };
    let usize_of = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::ParamFile(format!("bad `{k}`")))
    };
    let n_items = usize_of("n_items")?;
    let c = usize_of("compressed_dim")?;
    let h = usize_of("hidden_dim")?;
    let seed: u64 = get("seed")?.parse().map_err(|_| Error::ParamFile("bad `seed`".into()))?;
    let dropout_p = parse_f64(&get("dropout_p")?)?;

    let mut blocks = std::collections::HashMap::new();
    let mut current = pending;
    while let Some(head) = current {
        let inner = head.trim_start_matches('[').trim_end_matches(']');
        let mut parts = inner.split_whitespace();
        let name = parts.next().unwrap_or_default().to_owned();
        let rows: usize = parts.next().and_then(|v| v.parse().ok()).unwrap_or(0);
        let cols: usize = parts.next().and_then(|v| v.parse().ok()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| Error::ParamFile(format!("truncated block {name}")))?;
            for v in line.split(',').filter(|v| !v.is_empty()) {
                data.push(parse_f64(v)?);
            }
        }
        let m = Array2::from_shape_vec((rows, cols), data)
            .map_err(|_| Error::ParamFile(format!("block {name} has the wrong size")))?;
        blocks.insert(name, m);
        current = lines.next();
    }
    let mut take = |name: &str, shape: (usize, usize)| -> Result<Array2<f64>> {
        let m = blocks.remove(name).ok_or_else(|| Error::ParamFile(format!("missing block {name}")))?;
        if m.dim() != shape {
            return Err(Error::ParamFile(format!("block {name} has shape {:?}, expected {shape:?}", m.dim())));
        }
        Ok(m)
    };
    let projection = match get("projection")?.as_str() {
        "identity" => Projection::Identity,
        "dense" => Projection::Dense(take("projection", (2 * n_items, c))?),
        other => return Err(Error::ParamFile(format!("unknown projection `{other}`"))),
    };
    let row = |m: Array2<f64>| -> Array1<f64> { m.row(0).to_owned() };
    Ok(DktParameters {
        n_items,
        seed,
        dropout_p,
        projection,
        w_xh: take("w_xh", (c, h))?,
        w_hh: take("w_hh", (h, h))?,
        w_hy: take("w_hy", (h, n_items))?,
        b_h: row(take("b_h", (1, h))?),
        b_y: row(take("b_y", (1, n_items))?),
    })
}
