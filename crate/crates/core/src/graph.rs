//! Video-as-graph data model: fixed node slots, fully connected
//! unit-weight adjacency, symmetric normalization, zero-vector padding.

use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Per-node class. Dead is the positive (rare) class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Alive,
    Dead,
}

impl Label {
    pub fn from_index(i: usize) -> Result<Label> {
        match i {
            0 => Ok(Label::Alive),
            1 => Ok(Label::Dead),
            _ => Err(Error::domain(format!("label index {i} outside {{0,1}}"))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Alive => 0,
            Label::Dead => 1,
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.index() as u8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_index(v as usize).map_err(serde::de::Error::custom)
    }
}

/// One video: a sequence of `t` graphs over `n` node slots with `f`
/// features per node. Slots beyond the real cell count carry zero
/// features, an alive label and mask 0. Field order matters for the
/// line-oriented dataset format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct STGraphSequence {
    pub id: String,
    pub t: usize,
    pub n: usize,
    pub f: usize,
    /// Indexed [time][node][feature].
    pub features: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<Label>,
    pub mask: Vec<u8>,
    /// Raw adjacency; absent means fully connected with unit weights.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adjacency: Option<Vec<Vec<f64>>>,
    /// Optional per-node death-marker traces, indexed [node][time].
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub markers: Option<Vec<Vec<f64>>>,
}

impl STGraphSequence {
    /// The raw adjacency as a matrix, materializing the fully connected
    /// default when none is stored.
    pub fn adjacency_matrix(&self) -> Result<Matrix> {
        match &self.adjacency {
            Some(rows) => {
                let m = Matrix::from_rows(rows)?;
                if m.shape() != (self.n, self.n) {
                    return Err(Error::validation(format!(
                        "adjacency is {}x{}, expected {}x{}",
                        m.rows(),
                        m.cols(),
                        self.n,
                        self.n
                    )));
                }
                Ok(m)
            }
            None => build_fully_connected(self.n),
        }
    }

    /// Node feature matrix at frame `ti`, shape n x f.
    pub fn frame(&self, ti: usize) -> Result<Matrix> {
        Matrix::from_rows(&self.features[ti])
    }

    pub fn real_cells(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Normalized adjacency together with a digest of the raw matrix it was
/// derived from.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: Matrix,
    pub source_hash: u64,
}

/// FNV-1a over the bit patterns of the entries; stable across runs.
fn digest(m: &Matrix) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut mix = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    mix(m.rows() as u64);
    mix(m.cols() as u64);
    for &x in m.data() {
        mix(x.to_bits());
    }
    h
}

/// Fully connected graph with unit edge weights and zero diagonal.
pub fn build_fully_connected(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::domain("graph needs at least one node".to_string()));
    }
    let mut m = Matrix::filled(n, n, 1.0);
    for i in 0..n {
        m.set(i, i, 0.0);
    }
    Ok(m)
}

/// Symmetric renormalization: D^{-1/2} (A + I) D^{-1/2} with D the degree
/// matrix of A + I. The self-loop keeps every degree at least 1.
pub fn normalize_adjacency(a: &Matrix) -> Result<NormalizedAdjacency> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::validation(format!(
            "adjacency must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v < 0.0 {
                return Err(Error::validation(format!(
                    "negative edge weight at ({i}, {j})"
                )));
            }
            if a.get(i, j) != a.get(j, i) {
                return Err(Error::validation(format!(
                    "adjacency asymmetric at ({i}, {j})"
                )));
            }
        }
        if a.get(i, i) != 0.0 {
            return Err(Error::validation(format!("nonzero diagonal at node {i}")));
        }
    }
    let mut deg_inv_sqrt = vec![0.0; n];
    for i in 0..n {
        let d: f64 = (0..n).map(|j| a.get(i, j)).sum::<f64>() + 1.0;
        deg_inv_sqrt[i] = 1.0 / d.sqrt();
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let aij = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
            // multiply the degree factors first so the result is
            // bitwise symmetric
            out.set(i, j, (deg_inv_sqrt[i] * deg_inv_sqrt[j]) * aij);
        }
    }
    Ok(NormalizedAdjacency {
        matrix: out,
        source_hash: digest(a),
    })
}

/// Pads `k` real cells up to `n_slots`, filling spare slots with zero
/// features and alive labels. Markers, when given, are padded with zero
/// traces the same way.
pub fn pad_sequence(
    id: impl Into<String>,
    raw_features: &[Vec<Vec<f64>>],
    labels: &[Label],
    markers: Option<&[Vec<f64>]>,
    n_slots: usize,
) -> Result<STGraphSequence> {
    let t = raw_features.len();
    if t == 0 {
        return Err(Error::domain("sequence needs at least one frame".to_string()));
    }
    let k = labels.len();
    if k == 0 {
        return Err(Error::domain("sequence needs at least one real cell".to_string()));
    }
    if k > n_slots {
        return Err(Error::validation(format!(
            "{k} cells exceed {n_slots} node slots"
        )));
    }
    let f = raw_features[0]
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::domain("empty frame".to_string()))?;
    let mut features = Vec::with_capacity(t);
    for (ti, frame) in raw_features.iter().enumerate() {
        if frame.len() != k {
            return Err(Error::validation(format!(
                "frame {ti} has {} cells, expected {k}",
                frame.len()
            )));
        }
        let mut slots = Vec::with_capacity(n_slots);
        for cell in frame {
            if cell.len() != f {
                return Err(Error::validation(format!(
                    "feature length {} at frame {ti}, expected {f}",
                    cell.len()
                )));
            }
            slots.push(cell.clone());
        }
        slots.resize(n_slots, vec![0.0; f]);
        features.push(slots);
    }
    let mut padded_labels = labels.to_vec();
    padded_labels.resize(n_slots, Label::Alive);
    let mut mask = vec![1u8; k];
    mask.resize(n_slots, 0);
    let markers = markers.map(|m| {
        let mut out: Vec<Vec<f64>> = m.to_vec();
        out.resize(n_slots, vec![0.0; t]);
        out
    });
    Ok(STGraphSequence {
        id: id.into(),
        t,
        n: n_slots,
        f,
        features,
        labels: padded_labels,
        mask,
        adjacency: None,
        markers,
    })
}

/// Checks every structural invariant and returns all violations found.
pub fn validate_sequence(s: &STGraphSequence) -> Vec<String> {
    let mut out = Vec::new();
    if s.t == 0 || s.n == 0 || s.f == 0 {
        out.push(format!("degenerate dims t={} n={} f={}", s.t, s.n, s.f));
        return out;
    }
    if s.features.len() != s.t {
        out.push(format!("features has {} frames, expected {}", s.features.len(), s.t));
    }
    if s.labels.len() != s.n {
        out.push(format!("labels length {}, expected {}", s.labels.len(), s.n));
    }
    if s.mask.len() != s.n {
        out.push(format!("mask length {}, expected {}", s.mask.len(), s.n));
    }
    for (ti, frame) in s.features.iter().enumerate() {
        if frame.len() != s.n {
            out.push(format!("frame {ti} has {} slots, expected {}", frame.len(), s.n));
            continue;
        }
        for (v, cell) in frame.iter().enumerate() {
            if cell.len() != s.f {
                out.push(format!(
                    "frame {ti} node {v} has {} features, expected {}",
                    cell.len(),
                    s.f
                ));
            }
            if !cell.iter().all(|x| x.is_finite()) {
                out.push(format!("non-finite feature at frame {ti} node {v}"));
            }
        }
    }
    for (v, &m) in s.mask.iter().enumerate() {
        if m > 1 {
            out.push(format!("mask value {m} at node {v}"));
            continue;
        }
        if m == 0 {
            for (ti, frame) in s.features.iter().enumerate() {
                if frame
                    .get(v)
                    .map(|cell| cell.iter().any(|&x| x != 0.0))
                    .unwrap_or(false)
                {
                    out.push(format!("padded node {v} has nonzero features at frame {ti}"));
                }
            }
            if s.labels.get(v) == Some(&Label::Dead) {
                out.push(format!("padded node {v} labeled dead"));
            }
        }
    }
    if let Some(rows) = &s.adjacency {
        match Matrix::from_rows(rows) {
            Ok(a) if a.shape() == (s.n, s.n) => {
                for i in 0..s.n {
                    if a.get(i, i) != 0.0 {
                        out.push(format!("adjacency has nonzero diagonal at {i}"));
                    }
                    for j in 0..s.n {
                        if a.get(i, j) < 0.0 {
                            out.push(format!("negative adjacency weight at ({i}, {j})"));
                        }
                        if a.get(i, j) != a.get(j, i) {
                            out.push(format!("asymmetric adjacency at ({i}, {j})"));
                        }
                    }
                }
            }
            Ok(a) => out.push(format!(
                "adjacency is {}x{}, expected {}x{}",
                a.rows(),
                a.cols(),
                s.n,
                s.n
            )),
            Err(e) => out.push(format!("malformed adjacency: {e}")),
        }
    }
    if let Some(m) = &s.markers {
        if m.len() != s.n {
            out.push(format!("markers length {}, expected {}", m.len(), s.n));
        } else {
            for (v, trace) in m.iter().enumerate() {
                if trace.len() != s.t {
                    out.push(format!(
                        "marker trace for node {v} has length {}, expected {}",
                        trace.len(),
                        s.t
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_connected_small() {
        assert_eq!(build_fully_connected(1).unwrap(), Matrix::zeros(1, 1));
        let two = build_fully_connected(2).unwrap();
        assert_eq!(two.data(), &[0.0, 1.0, 1.0, 0.0]);
        let three = build_fully_connected(3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(three.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
        assert!(matches!(build_fully_connected(0), Err(Error::Domain(_))));
    }

    #[test]
    fn normalize_unit_fully_connected_is_one_over_n() {
        for n in 1..=16 {
            let a = build_fully_connected(n).unwrap();
            let norm = normalize_adjacency(&a).unwrap();
            for &v in norm.matrix.data() {
                assert!((v - 1.0 / n as f64).abs() <= 1e-12, "n={n}, v={v}");
            }
        }
    }

    #[test]
    fn normalize_singleton() {
        let a = Matrix::zeros(1, 1);
        let norm = normalize_adjacency(&a).unwrap();
        assert_eq!(norm.matrix.get(0, 0), 1.0);
    }

    #[test]
    fn normalize_matches_dense_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = 4;
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = rng.gen_range(0.0..3.0);
                    a.set(i, j, w);
                    a.set(j, i, w);
                }
            }
            let got = normalize_adjacency(&a).unwrap().matrix;
            // oracle: explicit D^{-1/2} (A+I) D^{-1/2} matrix product
            let a_tilde = a.add(&Matrix::identity(n)).unwrap();
            let mut d_inv_sqrt = Matrix::zeros(n, n);
            for i in 0..n {
                let d: f64 = a_tilde.row(i).iter().sum();
                d_inv_sqrt.set(i, i, 1.0 / d.sqrt());
            }
            let want = d_inv_sqrt
                .matmul(&a_tilde)
                .unwrap()
                .matmul(&d_inv_sqrt)
                .unwrap();
            for (x, y) in got.data().iter().zip(want.data()) {
                assert!((x - y).abs() <= 1e-12);
            }
            // symmetry is preserved exactly
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(got.get(i, j), got.get(j, i));
                }
            }
        }
    }

    #[test]
    fn normalize_rejects_bad_input() {
        let mut asym = Matrix::zeros(2, 2);
        asym.set(0, 1, 1.0);
        assert!(matches!(normalize_adjacency(&asym), Err(Error::Validation(_))));
        let mut neg = Matrix::zeros(2, 2);
        neg.set(0, 1, -1.0);
        neg.set(1, 0, -1.0);
        assert!(matches!(normalize_adjacency(&neg), Err(Error::Validation(_))));
    }

    fn raw_cells(t: usize, k: usize, f: usize) -> Vec<Vec<Vec<f64>>> {
        (0..t)
            .map(|ti| {
                (0..k)
                    .map(|v| (0..f).map(|fi| (ti * 100 + v * 10 + fi) as f64).collect())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn pad_full_house() {
        let raw = raw_cells(4, 3, 2);
        let s = pad_sequence("v", &raw, &[Label::Alive, Label::Dead, Label::Alive], None, 3)
            .unwrap();
        assert_eq!(s.mask, vec![1, 1, 1]);
        assert_eq!(s.features[2][1], raw[2][1]);
        assert!(validate_sequence(&s).is_empty());
    }

    #[test]
    fn pad_single_cell() {
        let raw = raw_cells(4, 1, 2);
        let s = pad_sequence("v", &raw, &[Label::Dead], None, 3).unwrap();
        assert_eq!(s.mask, vec![1, 0, 0]);
        assert_eq!(s.labels, vec![Label::Dead, Label::Alive, Label::Alive]);
        for frame in &s.features {
            assert!(frame[1].iter().all(|&x| x == 0.0));
            assert!(frame[2].iter().all(|&x| x == 0.0));
        }
        assert!(validate_sequence(&s).is_empty());
    }

    #[test]
    fn pad_rejects_overflow_and_empty() {
        let raw = raw_cells(2, 4, 2);
        let labels = vec![Label::Alive; 4];
        assert!(matches!(
            pad_sequence("v", &raw, &labels, None, 3),
            Err(Error::Validation(_))
        ));
        let empty: Vec<Vec<Vec<f64>>> = vec![vec![], vec![]];
        assert!(pad_sequence("v", &empty, &[], None, 3).is_err());
    }

    #[test]
    fn validate_flags_padded_node_with_features() {
        let raw = raw_cells(3, 1, 2);
        let mut s = pad_sequence("v", &raw, &[Label::Alive], None, 3).unwrap();
        s.features[1][2][0] = 5.0;
        let violations = validate_sequence(&s);
        assert!(violations.iter().any(|v| v.contains("node 2") && v.contains("frame 1")),
            "{violations:?}");
    }

    #[test]
    fn validate_flags_asymmetric_adjacency() {
        let raw = raw_cells(2, 2, 2);
        let mut s = pad_sequence("v", &raw, &[Label::Alive, Label::Alive], None, 2).unwrap();
        s.adjacency = Some(vec![vec![0.0, 1.0], vec![0.5, 0.0]]);
        let violations = validate_sequence(&s);
        assert!(violations.iter().any(|v| v.contains("asymmetric")));
    }
}
