//! Spin-graph Hamiltonians built from one- and two-body Pauli terms.
//!
//! A [`SpinGraph`] carries local terms on vertices and coupling terms on
//! edges; [`build_hamiltonian`] assembles the dense register Hamiltonian
//! `H = Σ_v L_v + Σ_e K_e` with coefficients in units of `ħω0`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::AqsError;
use crate::operator::{self, HermitianOperator};

/// Largest register the simulator accepts (dense matrices stay ≤ 128²).
pub const MAX_VERTICES: usize = 7;

/// A Pauli term may touch at most this many sites.
pub const MAX_TERM_WEIGHT: usize = 3;

/// Single-qubit Pauli label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> DMatrix<Complex64> {
        match self {
            Pauli::I => DMatrix::identity(2, 2),
            Pauli::X => operator::sigma_x(),
            Pauli::Y => operator::sigma_y(),
            Pauli::Z => operator::sigma_z(),
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// A weighted Pauli word `coeff · P_{s1} ⊗ P_{s2} ⊗ ...` acting on named
/// sites. Identity factors are dropped; the remaining factors are kept
/// sorted by site, and at most [`MAX_TERM_WEIGHT`] sites may be touched.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    coeff: f64,
    ops: Vec<(usize, Pauli)>,
}

impl PauliTerm {
    pub fn new(coeff: f64, factors: &[(usize, Pauli)]) -> Result<Self, AqsError> {
        if !coeff.is_finite() {
            return Err(AqsError::InvalidGraph(format!("non-finite coefficient {coeff}")));
        }
        let mut ops: Vec<(usize, Pauli)> = factors
            .iter()
            .copied()
            .filter(|&(_, p)| p != Pauli::I)
            .collect();
        ops.sort_by_key(|&(site, p)| (site, p));
        for w in ops.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(AqsError::InvalidGraph(format!(
                    "site {} appears twice in one term",
                    w[0].0
                )));
            }
        }
        if ops.len() > MAX_TERM_WEIGHT {
            return Err(AqsError::InvalidGraph(format!(
                "term touches {} sites, at most {MAX_TERM_WEIGHT} allowed",
                ops.len()
            )));
        }
        Ok(Self { coeff, ops })
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    /// Non-identity factors, sorted by site.
    pub fn ops(&self) -> &[(usize, Pauli)] {
        &self.ops
    }

    /// Number of sites the term acts on non-trivially.
    pub fn weight(&self) -> usize {
        self.ops.len()
    }

    pub fn max_site(&self) -> Option<usize> {
        self.ops.last().map(|&(site, _)| site)
    }

    /// Dense matrix of the term on an `n`-site register, site 0 leftmost.
    pub fn to_matrix(&self, n: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::<Complex64>::identity(1, 1);
        let mut it = self.ops.iter().peekable();
        for site in 0..n {
            let factor = match it.peek() {
                Some(&&(s, p)) if s == site => {
                    it.next();
                    p.matrix()
                }
                _ => DMatrix::identity(2, 2),
            };
            m = m.kronecker(&factor);
        }
        m * Complex64::new(self.coeff, 0.0)
    }

    /// Key for the canonical assembly order: site tuple, then labels.
    fn sort_key(&self) -> (Vec<usize>, Vec<Pauli>) {
        (
            self.ops.iter().map(|&(s, _)| s).collect(),
            self.ops.iter().map(|&(_, p)| p).collect(),
        )
    }
}

/// Vertex and edge terms of a spin-graph Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinGraph {
    n_vertices: usize,
    local: Vec<PauliTerm>,
    edges: Vec<PauliTerm>,
}

impl SpinGraph {
    pub fn new(
        n_vertices: usize,
        local: Vec<PauliTerm>,
        edges: Vec<PauliTerm>,
    ) -> Result<Self, AqsError> {
        if n_vertices == 0 || n_vertices > MAX_VERTICES {
            return Err(AqsError::InvalidGraph(format!(
                "vertex count {n_vertices} outside 1..={MAX_VERTICES}"
            )));
        }
        for t in &local {
            if t.weight() != 1 {
                return Err(AqsError::InvalidGraph(format!(
                    "local term must touch exactly one site, got weight {}",
                    t.weight()
                )));
            }
        }
        for t in &edges {
            if t.weight() != 2 {
                return Err(AqsError::InvalidGraph(format!(
                    "edge term must touch exactly two distinct sites, got weight {}",
                    t.weight()
                )));
            }
        }
        for t in local.iter().chain(&edges) {
            if let Some(max) = t.max_site() {
                if max >= n_vertices {
                    return Err(AqsError::InvalidGraph(format!(
                        "site {max} out of range for {n_vertices} vertices"
                    )));
                }
            }
        }
        Ok(Self {
            n_vertices,
            local,
            edges,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn local_terms(&self) -> &[PauliTerm] {
        &self.local
    }

    pub fn edge_terms(&self) -> &[PauliTerm] {
        &self.edges
    }

    pub fn terms(&self) -> impl Iterator<Item = &PauliTerm> {
        self.local.iter().chain(self.edges.iter())
    }

    /// `Σ|coeff|`; bounds the spectral norm of the built Hamiltonian.
    pub fn coefficient_l1(&self) -> f64 {
        self.terms().map(|t| t.coeff.abs()).sum()
    }
}

/// Assembles the dense Hamiltonian, summing terms in a canonical order
/// (sorted by site tuple, then Pauli labels) so that term order in the
/// input never changes the result.
pub fn build_hamiltonian(graph: &SpinGraph) -> Result<HermitianOperator, AqsError> {
    let n = graph.n_vertices();
    let dim = 1usize << n;
    let mut ordered: Vec<&PauliTerm> = graph.terms().collect();
    ordered.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for t in ordered {
        h += t.to_matrix(n);
    }
    HermitianOperator::new(h)
}

/// Dense matrix of a single Pauli at `site` on an `n`-qubit register.
pub fn pauli_matrix(p: Pauli, site: usize, n: usize) -> Result<HermitianOperator, AqsError> {
    if site >= n {
        return Err(AqsError::InvalidGraph(format!(
            "site {site} out of range for {n} qubits"
        )));
    }
    HermitianOperator::new(operator::embed_single_qubit(&p.matrix(), site, n))
}

// JSON schema:
// {"n": 2,
//  "local": [{"site": 0, "pauli": "Z", "coeff": -0.62}],
//  "edges": [{"sites": [0, 1], "paulis": "ZZ", "coeff": 0.8}]}

#[derive(Serialize, Deserialize)]
struct RawLocal {
    site: usize,
    pauli: String,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct RawEdge {
    sites: [usize; 2],
    paulis: String,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n: usize,
    local: Vec<RawLocal>,
    edges: Vec<RawEdge>,
}

fn parse_label(s: &str, want: usize) -> Result<Vec<Pauli>, AqsError> {
    let ps: Option<Vec<Pauli>> = s.chars().map(Pauli::from_char).collect();
    let ps = ps.ok_or_else(|| AqsError::InvalidGraph(format!("unknown Pauli label {s:?}")))?;
    if ps.len() != want || ps.contains(&Pauli::I) {
        return Err(AqsError::InvalidGraph(format!(
            "label {s:?} must be {want} non-identity Pauli letter(s)"
        )));
    }
    Ok(ps)
}

impl TryFrom<RawGraph> for SpinGraph {
    type Error = AqsError;

    fn try_from(raw: RawGraph) -> Result<Self, AqsError> {
        let mut local = Vec::with_capacity(raw.local.len());
        for l in &raw.local {
            let p = parse_label(&l.pauli, 1)?[0];
            local.push(PauliTerm::new(l.coeff, &[(l.site, p)])?);
        }
        let mut edges = Vec::with_capacity(raw.edges.len());
        for e in &raw.edges {
            if e.sites[0] == e.sites[1] {
                return Err(AqsError::InvalidGraph(format!(
                    "self-loop on site {}",
                    e.sites[0]
                )));
            }
            let ps = parse_label(&e.paulis, 2)?;
            edges.push(PauliTerm::new(
                e.coeff,
                &[(e.sites[0], ps[0]), (e.sites[1], ps[1])],
            )?);
        }
        SpinGraph::new(raw.n, local, edges)
    }
}

impl From<&SpinGraph> for RawGraph {
    fn from(g: &SpinGraph) -> Self {
        RawGraph {
            n: g.n_vertices,
            local: g
                .local
                .iter()
                .map(|t| RawLocal {
                    site: t.ops[0].0,
                    pauli: t.ops[0].1.to_char().to_string(),
                    coeff: t.coeff,
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|t| RawEdge {
                    sites: [t.ops[0].0, t.ops[1].0],
                    paulis: t.ops.iter().map(|&(_, p)| p.to_char()).collect(),
                    coeff: t.coeff,
                })
                .collect(),
        }
    }
}

impl Serialize for SpinGraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawGraph::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpinGraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawGraph::deserialize(deserializer)?;
        SpinGraph::try_from(raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent route: every matrix entry from single-qubit elements and
    /// bit arithmetic, no tensor-product code shared with the implementation.
    fn naive_entry(term: &PauliTerm, n: usize, row: usize, col: usize) -> Complex64 {
        let mut acc = Complex64::new(term.coeff(), 0.0);
        for site in 0..n {
            let bi = (row >> (n - 1 - site)) & 1;
            let bj = (col >> (n - 1 - site)) & 1;
            let p = term
                .ops()
                .iter()
                .find(|&&(s, _)| s == site)
                .map(|&(_, p)| p)
                .unwrap_or(Pauli::I);
            let e = match p {
                Pauli::I => {
                    if bi == bj {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }
                Pauli::X => {
                    if bi != bj {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }
                Pauli::Y => {
                    if bi == 0 && bj == 1 {
                        Complex64::new(0.0, -1.0)
                    } else if bi == 1 && bj == 0 {
                        Complex64::new(0.0, 1.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }
                Pauli::Z => {
                    if bi != bj {
                        Complex64::new(0.0, 0.0)
                    } else if bi == 0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(-1.0, 0.0)
                    }
                }
            };
            acc *= e;
        }
        acc
    }

    fn naive_hamiltonian(graph: &SpinGraph) -> DMatrix<Complex64> {
        let n = graph.n_vertices();
        let dim = 1 << n;
        DMatrix::from_fn(dim, dim, |i, j| {
            graph.terms().map(|t| naive_entry(t, n, i, j)).sum()
        })
    }

    fn three_qubit_example() -> SpinGraph {
        SpinGraph::new(
            3,
            vec![
                PauliTerm::new(0.7, &[(0, Pauli::Z)]).unwrap(),
                PauliTerm::new(-0.4, &[(1, Pauli::X)]).unwrap(),
                PauliTerm::new(0.9, &[(2, Pauli::Y)]).unwrap(),
            ],
            vec![
                PauliTerm::new(0.8, &[(0, Pauli::Z), (1, Pauli::Z)]).unwrap(),
                PauliTerm::new(-1.1, &[(1, Pauli::X), (2, Pauli::Y)]).unwrap(),
                PauliTerm::new(0.3, &[(0, Pauli::X), (2, Pauli::X)]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn pauli_matrix_embeds_at_site() {
        // (X, site 1, n = 2) is I ⊗ X.
        let m = pauli_matrix(Pauli::X, 1, 2).unwrap();
        let expected = DMatrix::identity(2, 2).kronecker(&operator::sigma_x());
        assert_eq!(m.matrix(), &expected);
        assert!(pauli_matrix(Pauli::X, 2, 2).is_err());
    }

    #[test]
    fn term_drops_identities_and_sorts() {
        let t = PauliTerm::new(1.5, &[(2, Pauli::Z), (0, Pauli::I), (1, Pauli::X)]).unwrap();
        assert_eq!(t.weight(), 2);
        assert_eq!(t.ops(), &[(1, Pauli::X), (2, Pauli::Z)]);
    }

    #[test]
    fn term_rejects_duplicate_site_and_high_weight() {
        assert!(PauliTerm::new(1.0, &[(0, Pauli::X), (0, Pauli::Z)]).is_err());
        assert!(PauliTerm::new(
            1.0,
            &[(0, Pauli::X), (1, Pauli::X), (2, Pauli::X), (3, Pauli::X)]
        )
        .is_err());
        assert!(PauliTerm::new(f64::NAN, &[(0, Pauli::X)]).is_err());
    }

    #[test]
    fn zz_term_matrix() {
        let t = PauliTerm::new(1.0, &[(0, Pauli::Z), (1, Pauli::Z)]).unwrap();
        let m = t.to_matrix(2);
        let expected = DMatrix::from_diagonal(&nalgebra::dvector![
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(1.0, 0.0)
        ]);
        assert_eq!(m, expected);
    }

    #[test]
    fn graph_validation() {
        let z0 = PauliTerm::new(1.0, &[(0, Pauli::Z)]).unwrap();
        let zz01 = PauliTerm::new(1.0, &[(0, Pauli::Z), (1, Pauli::Z)]).unwrap();
        assert!(SpinGraph::new(0, vec![], vec![]).is_err());
        assert!(SpinGraph::new(8, vec![], vec![]).is_err());
        // site out of range
        assert!(SpinGraph::new(1, vec![], vec![zz01.clone()]).is_err());
        // an edge term used as a local one
        assert!(SpinGraph::new(2, vec![zz01.clone()], vec![]).is_err());
        // a local term used as an edge
        assert!(SpinGraph::new(2, vec![], vec![z0.clone()]).is_err());
        assert!(SpinGraph::new(2, vec![z0], vec![zz01]).is_ok());
    }

    #[test]
    fn build_matches_naive_oracle() {
        let g = three_qubit_example();
        let h = build_hamiltonian(&g).unwrap();
        let oracle = naive_hamiltonian(&g);
        assert!((h.matrix() - &oracle).norm() < 1e-12 * oracle.norm());
    }

    #[test]
    fn build_single_local_field() {
        let g = SpinGraph::new(
            1,
            vec![PauliTerm::new(0.5, &[(0, Pauli::Z)]).unwrap()],
            vec![],
        )
        .unwrap();
        let h = build_hamiltonian(&g).unwrap();
        assert_relative_eq!(h.matrix()[(0, 0)].re, 0.5, max_relative = 1e-15);
        assert_relative_eq!(h.matrix()[(1, 1)].re, -0.5, max_relative = 1e-15);
        let (e0, _) = h.ground_state();
        assert_relative_eq!(e0, -0.5, max_relative = 1e-15);
    }

    #[test]
    fn term_order_never_matters() {
        let g = three_qubit_example();
        let reversed = SpinGraph::new(
            3,
            g.local_terms().iter().rev().cloned().collect(),
            g.edge_terms().iter().rev().cloned().collect(),
        )
        .unwrap();
        let h1 = build_hamiltonian(&g).unwrap();
        let h2 = build_hamiltonian(&reversed).unwrap();
        // canonical assembly makes the sums identical, not merely close
        assert_eq!(h1.matrix(), h2.matrix());
    }

    #[test]
    fn json_round_trip_spec_shape() {
        let text = r#"{
            "n": 2,
            "local": [{"site": 0, "pauli": "Z", "coeff": -0.62}],
            "edges": [{"sites": [0, 1], "paulis": "ZZ", "coeff": 0.8}]
        }"#;
        let g: SpinGraph = serde_json::from_str(text).unwrap();
        assert_eq!(g.n_vertices(), 2);
        assert_relative_eq!(g.local_terms()[0].coeff(), -0.62);
        assert_relative_eq!(g.edge_terms()[0].coeff(), 0.8);
        assert_relative_eq!(g.coefficient_l1(), 1.42, max_relative = 1e-12);

        let out = serde_json::to_string(&g).unwrap();
        let back: SpinGraph = serde_json::from_str(&out).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn json_rejects_bad_graphs() {
        // self-loop
        let r: Result<SpinGraph, _> = serde_json::from_str(
            r#"{"n": 2, "local": [], "edges": [{"sites": [1, 1], "paulis": "ZZ", "coeff": 1.0}]}"#,
        );
        assert!(r.is_err());
        // unknown label
        let r: Result<SpinGraph, _> = serde_json::from_str(
            r#"{"n": 2, "local": [{"site": 0, "pauli": "Q", "coeff": 1.0}], "edges": []}"#,
        );
        assert!(r.is_err());
        // identity inside an edge label
        let r: Result<SpinGraph, _> = serde_json::from_str(
            r#"{"n": 2, "local": [], "edges": [{"sites": [0, 1], "paulis": "ZI", "coeff": 1.0}]}"#,
        );
        assert!(r.is_err());
        // site out of range
        let r: Result<SpinGraph, _> = serde_json::from_str(
            r#"{"n": 2, "local": [{"site": 5, "pauli": "X", "coeff": 1.0}], "edges": []}"#,
        );
        assert!(r.is_err());
    }

    fn arb_graph() -> impl Strategy<Value = SpinGraph> {
        let pauli = prop::sample::select(vec![Pauli::X, Pauli::Y, Pauli::Z]);
        (2usize..=4).prop_flat_map(move |n| {
            let local = prop::collection::vec(
                (0..n, pauli.clone(), -1.0..1.0f64)
                    .prop_map(|(s, p, c)| PauliTerm::new(c, &[(s, p)]).unwrap()),
                0..4,
            );
            let edges = prop::collection::vec(
                (0..n - 1, pauli.clone(), pauli.clone(), -1.0..1.0f64)
                    .prop_map(move |(s, p1, p2, c)| {
                        PauliTerm::new(c, &[(s, p1), (s + 1, p2)]).unwrap()
                    }),
                0..4,
            );
            (local, edges).prop_map(move |(l, e)| SpinGraph::new(n, l, e).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn built_hamiltonian_is_traceless_and_matches_oracle(g in arb_graph()) {
            let h = build_hamiltonian(&g).unwrap();
            // every non-identity Pauli word is traceless
            prop_assert!(h.matrix().trace().norm() <= 1e-12 * g.coefficient_l1().max(1.0));
            let oracle = naive_hamiltonian(&g);
            prop_assert!((h.matrix() - &oracle).norm() <= 1e-12 * oracle.norm().max(1.0));
        }

        #[test]
        fn coefficient_scaling_is_linear(g in arb_graph(), factor in -2.0..2.0f64) {
            let scaled = SpinGraph::new(
                g.n_vertices(),
                g.local_terms().iter().map(|t| PauliTerm::new(t.coeff() * factor, t.ops()).unwrap()).collect(),
                g.edge_terms().iter().map(|t| PauliTerm::new(t.coeff() * factor, t.ops()).unwrap()).collect(),
            ).unwrap();
            let h = build_hamiltonian(&g).unwrap();
            let hs = build_hamiltonian(&scaled).unwrap();
            let diff = (hs.matrix() - h.scaled(factor).matrix()).norm();
            prop_assert!(diff <= 1e-12 * h.frobenius_norm().max(1.0));
        }
    }
}
