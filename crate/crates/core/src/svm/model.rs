use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::gram::DotMatrix;
use super::smo::{solve, SmoConfig};
use super::{Kernel, Result, SvmError, SvmParams};

const MAGIC: &[u8; 8] = b"FMSVMMDL";
const VERSION: u32 = 1;

/// Feature rows with class indices into `classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from named labels; class order is lexicographic.
    pub fn from_named<S: AsRef<str>>(features: Vec<Vec<f64>>, names: &[S]) -> Self {
        let classes: Vec<String> = names
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let labels = names.iter().map(|s| classes.iter().position(|c| c == s.as_ref()).unwrap()).collect();
        Dataset { features, labels, classes }
    }

    /// Builds a dataset with a fixed class list; labels must index into it.
    pub fn with_classes(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: Vec<String>) -> Self {
        Dataset { features, labels, classes }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(SvmError::InvalidTrainingSet("no samples".into()));
        }
        if self.labels.len() != self.features.len() {
            return Err(SvmError::InvalidTrainingSet("labels and features differ in length".into()));
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(SvmError::InvalidFeature("zero-length feature vectors".into()));
        }
        for (i, f) in self.features.iter().enumerate() {
            if f.len() != dim {
                return Err(SvmError::InvalidFeature(format!("row {i} has {} dims, expected {dim}", f.len())));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(SvmError::InvalidFeature(format!("row {i} contains a non-finite value")));
            }
        }
        if self.labels.iter().any(|&l| l >= self.classes.len()) {
            return Err(SvmError::InvalidTrainingSet("label index out of range".into()));
        }
        let present = self.class_counts().iter().filter(|&&c| c > 0).count();
        if present < 2 {
            return Err(SvmError::InvalidTrainingSet(format!("need at least 2 classes, found {present}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
    pub decision: Vec<f64>,
}

impl Prediction {
    /// Softmax (temperature 1) over one-vs-rest margins; argmax ties → lowest class index.
    pub fn from_decisions(decision: Vec<f64>) -> Self {
        let max = decision.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = decision.iter().map(|d| (d - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let class = argmax(&probs);
        Prediction { class, probs, decision }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// One-vs-rest kernel machine. Support vectors are pooled across the
/// per-class machines; `coef[c][s]` is `α_s y_s` of machine `c` (zero when
/// `s` is not a support vector of that machine).
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub params: SvmParams,
    pub classes: Vec<String>,
    pub dim: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub coef: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Free-form key/value pairs carried with the model file.
    pub metadata: BTreeMap<String, String>,
}

pub fn train(data: &Dataset, params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    data.validate()?;
    let dots = DotMatrix::new(&data.features);
    train_with_dots(data, &dots, params)
}

pub(crate) fn train_with_dots(data: &Dataset, dots: &DotMatrix, params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    data.validate()?;
    let gram = dots.gram(params);
    let n = data.len();
    let k = data.classes.len();
    let config = SmoConfig::default();
    let machine = |class: usize| {
        let y: Vec<f64> = data.labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let sol = solve(&gram, &y, params.penalty_c, &config);
        let coef: Vec<f64> = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).collect();
        (coef, sol.bias)
    };
    let machines: Vec<(Vec<f64>, f64)> = if k == 2 {
        // the two one-vs-rest problems are mirror images
        let (coef, bias) = machine(1);
        vec![(coef.iter().map(|c| -c).collect(), -bias), (coef, bias)]
    } else {
        crate::par::map_range(k, machine)
    };
    let used: Vec<usize> = (0..n).filter(|&i| machines.iter().any(|(c, _)| c[i] != 0.0)).collect();
    Ok(SvmModel {
        params: *params,
        classes: data.classes.clone(),
        dim: data.dim(),
        support_vectors: used.iter().map(|&i| data.features[i].clone()).collect(),
        coef: machines.iter().map(|(c, _)| used.iter().map(|&i| c[i]).collect()).collect(),
        bias: machines.iter().map(|(_, b)| *b).collect(),
        metadata: BTreeMap::new(),
    })
}

impl SvmModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(SvmError::InvalidFeature(format!("expected {} dims, got {}", self.dim, x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::InvalidFeature("non-finite feature value".into()));
        }
        let k: Vec<f64> = self.support_vectors.iter().map(|sv| self.params.eval(sv, x)).collect();
        Ok(self
            .coef
            .iter()
            .zip(&self.bias)
            .map(|(c, b)| c.iter().zip(&k).map(|(a, kv)| a * kv).sum::<f64>() + b)
            .collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_decisions(self.decision_values(x)?))
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        crate::par::map(xs, |x| self.predict(x)).into_iter().collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u8(match self.params.kernel {
            Kernel::Rbf => 0,
            Kernel::Linear => 1,
        })?;
        w.write_f64::<LittleEndian>(self.params.gamma)?;
        w.write_f64::<LittleEndian>(self.params.penalty_c)?;
        w.write_u32::<LittleEndian>(self.classes.len() as u32)?;
        for c in &self.classes {
            write_str(&mut w, c)?;
        }
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u32::<LittleEndian>(self.support_vectors.len() as u32)?;
        for v in self.support_vectors.iter().flatten().chain(self.coef.iter().flatten()).chain(&self.bias) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        w.write_u32::<LittleEndian>(self.metadata.len() as u32)?;
        for (k, v) in &self.metadata {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SvmError::Format("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(SvmError::Format(format!("unsupported version {version}")));
        }
        let kernel = match r.read_u8()? {
            0 => Kernel::Rbf,
            1 => Kernel::Linear,
            other => return Err(SvmError::Format(format!("unknown kernel tag {other}"))),
        };
        let gamma = r.read_f64::<LittleEndian>()?;
        let penalty_c = r.read_f64::<LittleEndian>()?;
        let n_classes = r.read_u32::<LittleEndian>()? as usize;
        if n_classes > 1 << 16 {
            return Err(SvmError::Format("implausible class count".into()));
        }
        let classes = (0..n_classes).map(|_| read_str(&mut r)).collect::<Result<Vec<_>>>()?;
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let n_sv = r.read_u32::<LittleEndian>()? as usize;
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; n];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let support_vectors = (0..n_sv).map(|_| read_vec(dim)).collect::<Result<Vec<_>>>()?;
        let coef = (0..n_classes).map(|_| read_vec(n_sv)).collect::<Result<Vec<_>>>()?;
        let bias = read_vec(n_classes)?;
        let n_meta = r.read_u32::<LittleEndian>()? as usize;
        let mut metadata = BTreeMap::new();
        for _ in 0..n_meta {
            let k = read_str(&mut r)?;
            metadata.insert(k, read_str(&mut r)?);
        }
        Ok(SvmModel {
            params: SvmParams { kernel, gamma, penalty_c },
            classes,
            dim,
            support_vectors,
            coef,
            bias,
            metadata,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 20 {
        return Err(SvmError::Format("implausible string length".into()));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| SvmError::Format(e.to_string()))
}
