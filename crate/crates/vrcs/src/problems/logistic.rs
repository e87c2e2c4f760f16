//! Logistic regression datasets: CSV ingestion, a synthetic two-Gaussian
//! generator, and the disparity-index split that assigns rows to the
//! server and the two client groups.
//!
//! Dataset rows carry a class-group tag: `f` rows feed the f-side loss,
//! `g` rows the g-side. The server holds a mixed local sample whose f-share
//! is the disparity index kappa; kappa = 0.5 gives the server a balanced
//! sample (similar server-vs-group curvature on both sides), kappa near 1
//! starves the server's g-component and widens delta_g.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::problems::{ComponentOracle, CompositeProblem, DataMatrix};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupTag {
    F,
    G,
}

#[derive(Debug, Clone)]
pub struct LogisticData {
    pub features: DataMatrix,
    pub labels: Vec<f64>,
    pub groups: Vec<GroupTag>,
}

impl LogisticData {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.features.d()
    }
}

/// Reads rows of the form `label,feature_1,...,feature_d,group` with no
/// header. Labels must be +1/-1 (integer or float spelling); the trailing
/// group tag is `f` or `g`.
pub fn read_dataset_csv(path: &Path) -> Result<LogisticData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;

    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut vals = Vec::new();
    let mut d = None;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Dataset(format!("row {row}: {e}")))?;
        if record.len() < 3 {
            return Err(Error::Dataset(format!(
                "row {row}: need label, at least one feature, and a group tag"
            )));
        }
        let label: f64 = record[0]
            .parse()
            .map_err(|_| Error::Dataset(format!("row {row}: bad label '{}'", &record[0])))?;
        if label != 1.0 && label != -1.0 {
            return Err(Error::Dataset(format!(
                "row {row}: label must be +1 or -1, got {label}"
            )));
        }
        let tag = match &record[record.len() - 1] {
            "f" => GroupTag::F,
            "g" => GroupTag::G,
            other => {
                return Err(Error::Dataset(format!(
                    "row {row}: group tag must be 'f' or 'g', got '{other}'"
                )))
            }
        };
        let feats = record.len() - 2;
        match d {
            None => d = Some(feats),
            Some(expect) if expect != feats => {
                return Err(Error::Dataset(format!(
                    "row {row}: expected {expect} features, got {feats}"
                )))
            }
            _ => {}
        }
        for k in 1..record.len() - 1 {
            let v: f64 = record[k].parse().map_err(|_| {
                Error::Dataset(format!("row {row}: bad feature '{}'", &record[k]))
            })?;
            vals.push(v);
        }
        labels.push(label);
        groups.push(tag);
    }
    let d = d.ok_or_else(|| Error::Dataset("empty dataset".into()))?;
    let features = DataMatrix::new(labels.len(), d, vals)?;
    Ok(LogisticData {
        features,
        labels,
        groups,
    })
}

#[derive(Debug, Clone)]
pub struct TwoGaussianConfig {
    pub d: usize,
    pub n: usize,
    /// Distance from each class mean to the origin along the group's axis.
    pub separation: f64,
    pub seed: u64,
}

/// Balanced synthetic set: two class-conditional Gaussians per group.
/// The groups use different random axes and the g-side features are
/// dilated, so group-level curvatures genuinely differ.
pub fn synthetic_two_gaussian(cfg: &TwoGaussianConfig) -> Result<LogisticData> {
    if cfg.d < 2 || cfg.n < 4 {
        return Err(Error::InvalidParam(
            "two-Gaussian generator needs d >= 2 and n >= 4".into(),
        ));
    }
    if !(cfg.separation > 0.0) {
        return Err(Error::InvalidParam("separation must be positive".into()));
    }
    let mut rng = RngStream::new(cfg.seed);
    let unit = |rng: &mut RngStream| -> Vector {
        loop {
            let v = Vector::from_fn(cfg.d, |_| rng.normal());
            let n = v.norm();
            if n > 1e-9 {
                return v.scale(1.0 / n);
            }
        }
    };
    let axis_f = unit(&mut rng);
    let axis_g = unit(&mut rng);

    let mut labels = Vec::with_capacity(cfg.n);
    let mut groups = Vec::with_capacity(cfg.n);
    let mut vals = Vec::with_capacity(cfg.n * cfg.d);
    for i in 0..cfg.n {
        let tag = if i % 2 == 0 { GroupTag::F } else { GroupTag::G };
        let label = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let (axis, scale) = match tag {
            GroupTag::F => (&axis_f, 1.0),
            GroupTag::G => (&axis_g, 1.4),
        };
        for k in 0..cfg.d {
            let noise = rng.normal();
            vals.push(scale * (label * cfg.separation * axis[k] + noise));
        }
        labels.push(label);
        groups.push(tag);
    }
    Ok(LogisticData {
        features: DataMatrix::new(cfg.n, cfg.d, vals)?,
        labels,
        groups,
    })
}

fn gather(data: &LogisticData, idx: &[usize], l2: f64) -> Result<ComponentOracle> {
    let d = data.d();
    let mut vals = Vec::with_capacity(idx.len() * d);
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        vals.extend_from_slice(data.features.row(i));
        labels.push(data.labels[i]);
    }
    ComponentOracle::logistic(DataMatrix::new(idx.len(), d, vals)?, labels, l2)
}

/// Partitions a tagged dataset into the server pair (f_1, g_1) and the
/// client groups.
///
/// The server holds roughly one node's share of rows, of which a kappa
/// fraction comes from the f-tagged pool and the rest from the g-tagged
/// pool. Remaining rows of each pool are split evenly over that group's
/// clients, disjointly, in an order drawn from `seed`.
pub fn make_logistic_split(
    data: &LogisticData,
    kappa: f64,
    m_f: usize,
    m_g: usize,
    l2: f64,
    seed: u64,
) -> Result<CompositeProblem> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidParam(format!(
            "kappa must be in [0,1], got {kappa}"
        )));
    }
    if m_f < 2 || m_g < 2 {
        return Err(Error::Partition(
            "need at least one client per group (m_f, m_g >= 2)".into(),
        ));
    }
    if !(l2 > 0.0) {
        return Err(Error::InvalidParam(
            "l2 must be positive for a strongly convex objective".into(),
        ));
    }

    let mut idx_f: Vec<usize> = (0..data.n())
        .filter(|&i| data.groups[i] == GroupTag::F)
        .collect();
    let mut idx_g: Vec<usize> = (0..data.n())
        .filter(|&i| data.groups[i] == GroupTag::G)
        .collect();

    let mut rng = RngStream::new(seed);
    let shuffle = |v: &mut Vec<usize>, rng: &mut RngStream| {
        for i in (1..v.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            v.swap(i, j);
        }
    };
    shuffle(&mut idx_f, &mut rng);
    shuffle(&mut idx_g, &mut rng);

    let nodes = m_f + m_g - 1;
    let n_server = (data.n() / nodes).max(1);
    let sf = ((kappa * n_server as f64).round() as usize).min(n_server);
    let sg = n_server - sf;
    if sf > idx_f.len() {
        return Err(Error::Partition(format!(
            "server needs {sf} f-rows but only {} exist",
            idx_f.len()
        )));
    }
    if sg > idx_g.len() {
        return Err(Error::Partition(format!(
            "server needs {sg} g-rows but only {} exist",
            idx_g.len()
        )));
    }
    let rem_f = idx_f.len() - sf;
    let rem_g = idx_g.len() - sg;
    if rem_f < m_f - 1 || rem_g < m_g - 1 {
        return Err(Error::Partition(format!(
            "insufficient rows: {rem_f} f-rows for {} clients, {rem_g} g-rows for {} clients",
            m_f - 1,
            m_g - 1
        )));
    }

    let server_f = gather(data, &idx_f[..sf], l2)?;
    let server_g = gather(data, &idx_g[..sg], l2)?;

    let chunked = |pool: &[usize], parts: usize| -> Vec<Vec<usize>> {
        let base = pool.len() / parts;
        let extra = pool.len() % parts;
        let mut out = Vec::with_capacity(parts);
        let mut at = 0;
        for c in 0..parts {
            let take = base + usize::from(c < extra);
            out.push(pool[at..at + take].to_vec());
            at += take;
        }
        out
    };

    let mut clients_f = Vec::with_capacity(m_f - 1);
    for chunk in chunked(&idx_f[sf..], m_f - 1) {
        clients_f.push(gather(data, &chunk, l2)?);
    }
    let mut clients_g = Vec::with_capacity(m_g - 1);
    for chunk in chunked(&idx_g[sg..], m_g - 1) {
        clients_g.push(gather(data, &chunk, l2)?);
    }

    CompositeProblem::new(server_f, server_g, clients_f, clients_g)
}
