//! Sufficient statistics and change statistics for ERGM terms.
//!
//! A model is an ordered list of statistic terms. Every term provides its
//! global count `s(y)` and its change score: the difference in `s` when a
//! dyad is toggled from absent to present with the rest of the graph held
//! fixed. Change scores use the toggle-up convention regardless of the
//! dyad's observed state.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{ErgmError, Result};
use crate::graph::{Dyad, Graph};

/// One network statistic term.
#[derive(Debug, Clone, PartialEq)]
pub enum StatisticTerm {
    /// Total edge count.
    Edges,
    /// k-star count: sum over nodes of `C(degree, k)`, `k >= 2`.
    KStar(u32),
    /// Closed triangle count.
    Triangles,
    /// Geometrically weighted edgewise shared partners with fixed decay.
    Gwesp { decay: f64 },
    /// Main effect of a categorical attribute level: counts endpoint
    /// memberships of the level over all edges.
    NodalFactor { attr: String, level: String },
    /// Homophily effect: counts edges whose two endpoints both carry the
    /// level.
    NodalMatch { attr: String, level: String },
}

impl StatisticTerm {
    /// Unique descriptive label, used for chain column names and reports.
    pub fn label(&self) -> String {
        match self {
            StatisticTerm::Edges => "edges".into(),
            StatisticTerm::KStar(k) => format!("kstar{k}"),
            StatisticTerm::Triangles => "triangles".into(),
            StatisticTerm::Gwesp { decay } => format!("gwesp{decay}"),
            StatisticTerm::NodalFactor { attr, level } => format!("nodefactor.{attr}.{level}"),
            StatisticTerm::NodalMatch { attr, level } => format!("nodematch.{attr}.{level}"),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            StatisticTerm::KStar(k) if *k < 2 => {
                Err(ErgmError::InvalidTerm(format!("kstar requires k >= 2, got {k}")))
            }
            StatisticTerm::Gwesp { decay } if !decay.is_finite() || *decay < 0.0 => Err(
                ErgmError::InvalidTerm(format!("gwesp requires finite decay >= 0, got {decay}")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for StatisticTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn parse_params(body: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for part in body.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| ErgmError::InvalidTerm(format!("expected key=value, got `{part}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn lookup<'a>(params: &'a [(String, String)], key: &str, term: &str) -> Result<&'a str> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| ErgmError::InvalidTerm(format!("{term} requires `{key}=...`")))
}

impl FromStr for StatisticTerm {
    type Err = ErgmError;

    /// Parses the config syntax, e.g. `edges`, `kstar{k=2}`,
    /// `gwesp{decay=1.0}`, `nodematch{attr=grade,level=7}`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, params) = match s.split_once('{') {
            Some((n, rest)) => {
                let body = rest
                    .strip_suffix('}')
                    .ok_or_else(|| ErgmError::InvalidTerm(format!("unclosed `{{` in `{s}`")))?;
                (n.trim(), parse_params(body)?)
            }
            None => (s, Vec::new()),
        };
        let term = match name {
            "edges" => StatisticTerm::Edges,
            "triangles" | "triangle" => StatisticTerm::Triangles,
            "kstar" => {
                let k: u32 = lookup(&params, "k", "kstar")?
                    .parse()
                    .map_err(|_| ErgmError::InvalidTerm("kstar k must be an integer".into()))?;
                StatisticTerm::KStar(k)
            }
            "gwesp" => {
                let decay: f64 = lookup(&params, "decay", "gwesp")?
                    .parse()
                    .map_err(|_| ErgmError::InvalidTerm("gwesp decay must be a number".into()))?;
                StatisticTerm::Gwesp { decay }
            }
            "nodefactor" => StatisticTerm::NodalFactor {
                attr: lookup(&params, "attr", "nodefactor")?.to_string(),
                level: lookup(&params, "level", "nodefactor")?.to_string(),
            },
            "nodematch" => StatisticTerm::NodalMatch {
                attr: lookup(&params, "attr", "nodematch")?.to_string(),
                level: lookup(&params, "level", "nodematch")?.to_string(),
            },
            other => return Err(ErgmError::InvalidTerm(format!("unknown term `{other}`"))),
        };
        term.validate()?;
        Ok(term)
    }
}

/// An ordered list of statistic terms defining `s(y)` and the parameter
/// dimension `d`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    terms: Vec<StatisticTerm>,
}

impl ModelSpec {
    pub fn new(terms: Vec<StatisticTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(ErgmError::InvalidTerm("model needs at least one term".into()));
        }
        for t in &terms {
            t.validate()?;
        }
        let mut labels: Vec<String> = terms.iter().map(|t| t.label()).collect();
        labels.sort();
        for w in labels.windows(2) {
            if w[0] == w[1] {
                return Err(ErgmError::InvalidTerm(format!("duplicate term `{}`", w[0])));
            }
        }
        Ok(ModelSpec { terms })
    }

    /// Parses an ordered list of term strings.
    pub fn parse(specs: &[&str]) -> Result<Self> {
        let terms = specs
            .iter()
            .map(|s| s.parse::<StatisticTerm>())
            .collect::<Result<Vec<_>>>()?;
        ModelSpec::new(terms)
    }

    pub fn d(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[StatisticTerm] {
        &self.terms
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.label()).collect()
    }
}

/// A model with attribute references resolved against a concrete graph;
/// the form used by all evaluation loops.
#[derive(Debug, Clone)]
pub(crate) enum EvalTerm {
    Edges,
    KStar(u32),
    Triangles,
    Gwesp { exp_phi: f64, u: f64 },
    NodalFactor { values: Vec<u16>, code: u16 },
    NodalMatch { values: Vec<u16>, code: u16 },
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledModel {
    pub terms: Vec<EvalTerm>,
}

impl CompiledModel {
    pub fn compile(model: &ModelSpec, g: &Graph) -> Result<Self> {
        let mut terms = Vec::with_capacity(model.d());
        for t in model.terms() {
            terms.push(match t {
                StatisticTerm::Edges => EvalTerm::Edges,
                StatisticTerm::KStar(k) => EvalTerm::KStar(*k),
                StatisticTerm::Triangles => EvalTerm::Triangles,
                StatisticTerm::Gwesp { decay } => EvalTerm::Gwesp {
                    exp_phi: decay.exp(),
                    u: 1.0 - (-decay).exp(),
                },
                StatisticTerm::NodalFactor { attr, level }
                | StatisticTerm::NodalMatch { attr, level } => {
                    let a = g
                        .attribute(attr)
                        .ok_or_else(|| ErgmError::MissingAttribute(attr.clone()))?;
                    let code = a.code_of(level).ok_or_else(|| {
                        ErgmError::ModelMismatch(format!(
                            "attribute `{attr}` has no level `{level}`"
                        ))
                    })?;
                    let values = (0..g.n()).map(|i| a.code(i)).collect();
                    match t {
                        StatisticTerm::NodalFactor { .. } => EvalTerm::NodalFactor { values, code },
                        _ => EvalTerm::NodalMatch { values, code },
                    }
                }
            });
        }
        Ok(CompiledModel { terms })
    }

    pub fn d(&self) -> usize {
        self.terms.len()
    }
}

/// `C(n, k)` as a float; exact for the degree ranges handled here.
fn binom(n: usize, k: u32) -> f64 {
    let k = k as usize;
    if k > n {
        return 0.0;
    }
    let mut acc = 1.0;
    for t in 0..k {
        acc = acc * (n - t) as f64 / (t + 1) as f64;
    }
    acc
}

/// Shared-partner weight `w(s) = e^phi * (1 - (1 - e^-phi)^s)`; the GWESP
/// statistic is the sum of `w` over edges.
fn gwesp_weight(exp_phi: f64, u: f64, shared: usize) -> f64 {
    exp_phi * (1.0 - u.powi(shared as i32))
}

impl CompiledModel {
    pub fn sufficient(&self, g: &Graph) -> DVector<f64> {
        let mut out = DVector::zeros(self.d());
        let mut shared: Option<Vec<usize>> = None;
        for (t, term) in self.terms.iter().enumerate() {
            out[t] = match term {
                EvalTerm::Edges => g.edge_count() as f64,
                EvalTerm::KStar(k) => (0..g.n()).map(|i| binom(g.degree(i), *k)).sum(),
                EvalTerm::Triangles => {
                    let triple: usize = g.edges().iter().map(|&e| g.common_neighbors(e)).sum();
                    debug_assert_eq!(triple % 3, 0);
                    (triple / 3) as f64
                }
                EvalTerm::Gwesp { exp_phi, u } => {
                    let sp = shared.get_or_insert_with(|| {
                        g.edges().iter().map(|&e| g.common_neighbors(e)).collect()
                    });
                    sp.iter().map(|&s| gwesp_weight(*exp_phi, *u, s)).sum()
                }
                EvalTerm::NodalFactor { values, code } => (0..g.n())
                    .filter(|&i| values[i] == *code)
                    .map(|i| g.degree(i) as f64)
                    .sum(),
                EvalTerm::NodalMatch { values, code } => g
                    .edges()
                    .iter()
                    .filter(|e| values[e.i()] == *code && values[e.j()] == *code)
                    .count() as f64,
            };
        }
        out
    }

    /// Change score of one term for toggling `d` up, with the common
    /// neighbour scratch buffer supplied by the caller.
    fn term_change(&self, g: &Graph, term: &EvalTerm, d: Dyad, common: &mut Vec<u32>) -> f64 {
        let (i, j) = (d.i(), d.j());
        match term {
            EvalTerm::Edges => 1.0,
            EvalTerm::KStar(k) => {
                let present = g.has_edge(d) as usize;
                binom(g.degree(i) - present, *k - 1) + binom(g.degree(j) - present, *k - 1)
            }
            EvalTerm::Triangles => g.common_neighbors(d) as f64,
            EvalTerm::Gwesp { exp_phi, u } => {
                g.common_neighbors_into(d, common);
                let present = g.has_edge(d) as usize;
                // the toggled edge itself enters with the weight of its
                // shared-partner count ...
                let mut delta = gwesp_weight(*exp_phi, *u, common.len());
                // ... and every edge from an endpoint to a common neighbour
                // gains exactly one shared partner. With w(s+1) - w(s) =
                // (1 - e^-phi)^s the increments telescope; shared-partner
                // counts are taken in the graph without the toggled dyad.
                for &k in common.iter() {
                    let ik = Dyad::new(i, k as usize).expect("distinct");
                    let jk = Dyad::new(j, k as usize).expect("distinct");
                    let sp_ik = g.common_neighbors(ik) - present;
                    let sp_jk = g.common_neighbors(jk) - present;
                    delta += u.powi(sp_ik as i32) + u.powi(sp_jk as i32);
                }
                delta
            }
            EvalTerm::NodalFactor { values, code } => {
                (values[i] == *code) as u8 as f64 + (values[j] == *code) as u8 as f64
            }
            EvalTerm::NodalMatch { values, code } => {
                (values[i] == *code && values[j] == *code) as u8 as f64
            }
        }
    }

    pub fn change_into(&self, g: &Graph, d: Dyad, common: &mut Vec<u32>, out: &mut [f64]) {
        for (t, term) in self.terms.iter().enumerate() {
            out[t] = self.term_change(g, term, d, common);
        }
    }

    /// `theta . change(d)` without materializing the change vector.
    pub fn theta_dot_change(
        &self,
        g: &Graph,
        d: Dyad,
        theta: &DVector<f64>,
        common: &mut Vec<u32>,
    ) -> f64 {
        self.terms
            .iter()
            .zip(theta.iter())
            .map(|(term, &w)| w * self.term_change(g, term, d, common))
            .sum()
    }
}

/// The vector of sufficient statistics `s(y)`.
pub fn sufficient_statistics(g: &Graph, model: &ModelSpec) -> Result<DVector<f64>> {
    Ok(CompiledModel::compile(model, g)?.sufficient(g))
}

/// The change statistic for one dyad: `s(y with d present) - s(y with d
/// absent)`, the rest of the graph held fixed. `g` is not modified.
pub fn change_statistic(g: &Graph, model: &ModelSpec, d: Dyad) -> Result<DVector<f64>> {
    if d.j() >= g.n() {
        return Err(ErgmError::IndexOutOfRange { index: d.j(), n: g.n() });
    }
    let compiled = CompiledModel::compile(model, g)?;
    let mut out = DVector::zeros(model.d());
    let mut common = Vec::new();
    compiled.change_into(g, d, &mut common, out.as_mut_slice());
    Ok(out)
}

/// All change statistics plus the observed dyad states, in dyad order.
#[derive(Debug, Clone)]
pub struct ChangeStatMatrix {
    d: usize,
    rows: Vec<f64>,
    response: Vec<bool>,
}

impl ChangeStatMatrix {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of dyads `D`.
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.d..(k + 1) * self.d]
    }

    pub fn response(&self) -> &[bool] {
        &self.response
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], bool)> {
        self.rows.chunks_exact(self.d).zip(self.response.iter().copied())
    }
}

/// Builds the `D x d` predictor matrix of change statistics together with
/// the binary dyad response vector.
pub fn change_stat_matrix(g: &Graph, model: &ModelSpec) -> Result<ChangeStatMatrix> {
    let compiled = CompiledModel::compile(model, g)?;
    let d = model.d();
    let n_dyads = g.dyad_count();
    let mut rows = vec![0.0; n_dyads * d];
    let mut response = Vec::with_capacity(n_dyads);
    let mut common = Vec::new();
    for (k, dyad) in g.dyads().enumerate() {
        compiled.change_into(g, dyad, &mut common, &mut rows[k * d..(k + 1) * d]);
        response.push(g.has_edge(dyad));
    }
    Ok(ChangeStatMatrix { d, rows, response })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn k3() -> Graph {
        Graph::complete(3)
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::empty(n);
        let dyads: Vec<Dyad> = g.dyads().collect();
        for d in dyads {
            if rng.random::<f64>() < p {
                g.toggle(d).unwrap();
            }
        }
        g
    }

    /// Toggle-difference oracle: recompute the full statistic vector with
    /// the dyad forced present and forced absent.
    fn toggle_difference(g: &Graph, m: &ModelSpec, d: Dyad) -> DVector<f64> {
        let mut up = g.clone();
        if !up.has_edge(d) {
            up.toggle(d).unwrap();
        }
        let mut down = g.clone();
        if down.has_edge(d) {
            down.toggle(d).unwrap();
        }
        sufficient_statistics(&up, m).unwrap() - sufficient_statistics(&down, m).unwrap()
    }

    #[test]
    fn empty_graph_zero_stats() {
        let g = Graph::empty(6);
        let m = ModelSpec::parse(&["edges", "kstar{k=2}", "triangles", "gwesp{decay=1.0}"]).unwrap();
        let s = sufficient_statistics(&g, &m).unwrap();
        assert_eq!(s, DVector::zeros(4));
    }

    #[test]
    fn triangle_graph_counts() {
        let m = ModelSpec::parse(&["edges", "kstar{k=2}", "triangles"]).unwrap();
        let s = sufficient_statistics(&k3(), &m).unwrap();
        assert_eq!(s.as_slice(), &[3.0, 3.0, 1.0]);
    }

    #[test]
    fn gwesp_matches_shared_partner_formula() {
        // direct evaluation of e^phi * sum_i {1 - (1-e^-phi)^i} EP_i(y)
        let g = random_graph(6, 0.5, 9);
        let phi = 1.0f64;
        let mut ep = vec![0usize; g.n().saturating_sub(1)];
        for &e in g.edges() {
            ep[g.common_neighbors(e)] += 1;
        }
        let direct: f64 = ep
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| phi.exp() * (1.0 - (1.0 - (-phi).exp()).powi(i as i32)) * c as f64)
            .sum();
        let m = ModelSpec::parse(&["gwesp{decay=1.0}"]).unwrap();
        let s = sufficient_statistics(&g, &m).unwrap();
        assert_abs_diff_eq!(s[0], direct, epsilon = 1e-12);
    }

    #[test]
    fn edges_change_always_one() {
        let g = random_graph(7, 0.4, 3);
        let m = ModelSpec::parse(&["edges"]).unwrap();
        for d in g.dyads() {
            assert_eq!(change_statistic(&g, &m, d).unwrap()[0], 1.0);
        }
    }

    #[test]
    fn two_star_change_on_empty_graph_is_zero() {
        let g = Graph::empty(5);
        let m = ModelSpec::parse(&["kstar{k=2}"]).unwrap();
        for d in g.dyads() {
            assert_eq!(change_statistic(&g, &m, d).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn triangle_change_counts_common_neighbors() {
        for seed in 0..6u64 {
            let g = random_graph(8, 0.45, seed);
            let m = ModelSpec::parse(&["triangles"]).unwrap();
            for d in g.dyads() {
                let c = g.common_neighbors(d) as f64;
                let delta = change_statistic(&g, &m, d).unwrap()[0];
                assert_eq!(delta, c);
                assert_eq!(delta, toggle_difference(&g, &m, d)[0]);
            }
        }
    }

    #[test]
    fn change_statistics_match_toggle_difference() {
        let mut g = random_graph(8, 0.4, 17);
        g.set_attribute(
            "grp",
            (0..8).map(|i| if i % 2 == 0 { "a".into() } else { "b".into() }).collect(),
        )
        .unwrap();
        let m = ModelSpec::parse(&[
            "edges",
            "kstar{k=2}",
            "kstar{k=3}",
            "triangles",
            "gwesp{decay=1.0}",
            "nodefactor{attr=grp,level=a}",
            "nodematch{attr=grp,level=b}",
        ])
        .unwrap();
        for d in g.dyads() {
            let fast = change_statistic(&g, &m, d).unwrap();
            let oracle = toggle_difference(&g, &m, d);
            for t in 0..m.d() {
                assert_abs_diff_eq!(fast[t], oracle[t], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn change_stat_matrix_rows_align_with_dyads() {
        let g = Graph::empty(3);
        let m = ModelSpec::parse(&["edges"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        assert_eq!(csm.len(), 3);
        for (row, y) in csm.rows() {
            assert_eq!(row, &[1.0]);
            assert!(!y);
        }
    }

    #[test]
    fn change_stat_matrix_matches_per_dyad_oracle() {
        let g = random_graph(7, 0.5, 5);
        let m = ModelSpec::parse(&["edges", "triangles"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        for (k, dyad) in g.dyads().enumerate() {
            let oracle = toggle_difference(&g, &m, dyad);
            assert_eq!(csm.row(k), oracle.as_slice());
            assert_eq!(csm.response()[k], g.has_edge(dyad));
        }
    }

    #[test]
    fn missing_attribute_is_an_error() {
        let g = Graph::empty(4);
        let m = ModelSpec::parse(&["nodefactor{attr=grade,level=7}"]).unwrap();
        assert!(matches!(
            sufficient_statistics(&g, &m),
            Err(ErgmError::MissingAttribute(_))
        ));
    }

    #[test]
    fn parse_rejects_bad_terms() {
        assert!("kstar{k=1}".parse::<StatisticTerm>().is_err());
        assert!("gwesp{decay=-0.5}".parse::<StatisticTerm>().is_err());
        assert!("gwesp{decay=nanx}".parse::<StatisticTerm>().is_err());
        assert!("mystery".parse::<StatisticTerm>().is_err());
        assert!(ModelSpec::parse(&["edges", "edges"]).is_err());
    }

    #[test]
    fn parse_accepts_term_syntax() {
        assert_eq!("edges".parse::<StatisticTerm>().unwrap(), StatisticTerm::Edges);
        assert_eq!(
            "kstar{k=2}".parse::<StatisticTerm>().unwrap(),
            StatisticTerm::KStar(2)
        );
        assert_eq!(
            "gwesp{decay=1.0}".parse::<StatisticTerm>().unwrap(),
            StatisticTerm::Gwesp { decay: 1.0 }
        );
        assert_eq!(
            "nodematch{attr=grade, level=7}".parse::<StatisticTerm>().unwrap(),
            StatisticTerm::NodalMatch { attr: "grade".into(), level: "7".into() }
        );
    }

    fn permute_graph(g: &Graph, perm: &[usize]) -> Graph {
        let mut h = Graph::empty(g.n());
        for e in g.edges() {
            h.toggle(Dyad::new(perm[e.i()], perm[e.j()]).unwrap()).unwrap();
        }
        h
    }

    proptest! {
        #[test]
        fn structural_stats_invariant_under_relabeling(seed in 0u64..256, rot in 1usize..7) {
            let g = random_graph(7, 0.45, seed);
            let perm: Vec<usize> = (0..7).map(|i| (i + rot) % 7).collect();
            let h = permute_graph(&g, &perm);
            let m = ModelSpec::parse(&["edges", "kstar{k=2}", "triangles", "gwesp{decay=0.7}"]).unwrap();
            let sg = sufficient_statistics(&g, &m).unwrap();
            let sh = sufficient_statistics(&h, &m).unwrap();
            for t in 0..m.d() {
                prop_assert!((sg[t] - sh[t]).abs() < 1e-9);
            }
        }

        #[test]
        fn gwesp_nonnegative_and_bounded(seed in 0u64..128, decay in 0.0f64..3.0) {
            let g = random_graph(7, 0.5, seed);
            let m = ModelSpec::new(vec![StatisticTerm::Gwesp { decay }]).unwrap();
            let v = sufficient_statistics(&g, &m).unwrap()[0];
            prop_assert!(v >= 0.0);
            prop_assert!(v <= decay.exp() * g.edge_count() as f64 + 1e-9);
        }

        #[test]
        fn change_matches_toggle_difference_prop(seed in 0u64..64, k in 0usize..28) {
            let g = random_graph(8, 0.4, seed);
            let m = ModelSpec::parse(&["edges", "kstar{k=2}", "triangles", "gwesp{decay=1.0}"]).unwrap();
            let d = g.dyad_at(k % g.dyad_count());
            let fast = change_statistic(&g, &m, d).unwrap();
            let oracle = toggle_difference(&g, &m, d);
            for t in 0..m.d() {
                prop_assert!((fast[t] - oracle[t]).abs() < 1e-10);
            }
        }
    }
}
