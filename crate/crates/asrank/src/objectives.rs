//! The two training objectives over sentence embeddings, plus the triplet
//! taxonomy used for mining.
//!
//! Siamese head: a pair (u, v) becomes [u; v; |u − v|], one linear layer,
//! a sigmoid, and binary cross-entropy averaged over the batch. Triplet
//! head: squared-L2 hinge max(d²(a,p) − d²(a,n) + margin, 0) summed over
//! the batch.
//!
//! Every triplet falls in exactly one class relative to a margin m:
//! hard when d²(a,n) ≤ d²(a,p), semi-hard when the negative is farther
//! than the positive but by less than m, easy when d²(a,n) ≥ d²(a,p) + m.
//! The hinge is zero precisely on easy triplets, which is why mining
//! strategies that drop them change nothing about the loss value and only
//! shrink the graph.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::normal_init;
use crate::error::{Error, Result};
use crate::numerics::{cast, Array, Array32, Graph, Scalar, Var};

/// Predicted probabilities are clamped to [PROB_FLOOR, 1 − PROB_FLOOR]
/// before the logarithm so a saturated sigmoid cannot produce ±inf.
pub const PROB_FLOOR: f64 = 1e-7;

/// Pair feature vector [u; v; |u − v|].
pub fn combine(u: &[f32], v: &[f32]) -> Result<Vec<f32>> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "combining embeddings of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let mut out = Vec::with_capacity(3 * u.len());
    out.extend_from_slice(u);
    out.extend_from_slice(v);
    out.extend(u.iter().zip(v).map(|(a, b)| (a - b).abs()));
    Ok(out)
}

/// Linear classifier over the combined pair features.
#[derive(Clone, Debug, PartialEq)]
pub struct SiameseHead {
    /// `(3d, 1)` weight column.
    pub weight: Array32,
    /// `(1, 1)` bias.
    pub bias: Array32,
}

impl SiameseHead {
    pub fn init(hidden: usize, rng: &mut ChaCha8Rng) -> Result<SiameseHead> {
        if hidden == 0 {
            return Err(Error::Config("siamese head needs a positive embedding width".into()));
        }
        Ok(SiameseHead {
            weight: normal_init(rng, &[3 * hidden, 1], 0.02),
            bias: Array32::zeros(&[1, 1]),
        })
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Array32)) {
        f("head.weight".into(), &self.weight);
        f("head.bias".into(), &self.bias);
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, &'a mut Array32)) {
        f("head.weight".into(), &mut self.weight);
        f("head.bias".into(), &mut self.bias);
    }

    pub fn named(&self) -> Vec<(String, &Array32)> {
        let mut out = Vec::new();
        self.visit(&mut |name, arr| out.push((name, arr)));
        out
    }

    /// All-zero head of the right shape; checkpoint loading fills it in.
    pub(crate) fn zeros(hidden: usize) -> SiameseHead {
        SiameseHead {
            weight: Array32::zeros(&[3 * hidden, 1]),
            bias: Array32::zeros(&[1, 1]),
        }
    }
}

pub(crate) fn head_to_arrays<F: Scalar>(head: &SiameseHead) -> Vec<Array<F>> {
    vec![head.weight.convert(), head.bias.convert()]
}

#[derive(Clone, Copy)]
pub(crate) struct HeadVars {
    pub weight: Var,
    pub bias: Var,
}

pub(crate) fn insert_head_arrays<F: Scalar>(g: &mut Graph<F>, arrays: &[Array<F>]) -> Result<HeadVars> {
    if arrays.len() != 2 {
        return Err(Error::Shape(format!("{} tensors for a siamese head", arrays.len())));
    }
    Ok(HeadVars {
        weight: g.leaf(arrays[0].clone())?,
        bias: g.leaf(arrays[1].clone())?,
    })
}

pub(crate) fn insert_head(g: &mut Graph<f32>, head: &SiameseHead) -> Result<HeadVars> {
    insert_head_arrays(g, &head_to_arrays::<f32>(head))
}

/// Unclamped match probability for a pair of `(1, d)` embeddings.
pub(crate) fn score_on_graph<F: Scalar>(g: &mut Graph<F>, head: HeadVars, u: Var, v: Var) -> Result<Var> {
    let diff = g.sub(u, v)?;
    let absdiff = g.abs(diff)?;
    let combined = g.concat_cols(&[u, v, absdiff])?;
    let proj = g.matmul(combined, head.weight)?;
    let logit = g.add(proj, head.bias)?;
    g.sigmoid(logit)
}

/// σ(w·[u; v; |u−v|] + b), the probability the head assigns to "v answers
/// u".
pub fn siamese_score(head: &SiameseHead, u: &[f32], v: &[f32]) -> Result<f32> {
    let mut g: Graph<f32> = Graph::new();
    let hv = insert_head(&mut g, head)?;
    let ul = g.leaf(Array32::from_vec(vec![1, u.len()], u.to_vec())?)?;
    let vl = g.leaf(Array32::from_vec(vec![1, v.len()], v.to_vec())?)?;
    let p = score_on_graph(&mut g, hv, ul, vl)?;
    g.value(p).item()
}

/// Binary cross-entropy of one prediction, with the probability clamped
/// away from 0 and 1.
pub fn bce(p: f64, y: f64) -> Result<f64> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Data(format!("predicted probability {p} outside [0, 1]")));
    }
    if y != 0.0 && y != 1.0 {
        return Err(Error::Data(format!("label {y} is not 0 or 1")));
    }
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    Ok(-(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
}

/// Mean binary cross-entropy over a batch of (probability, label) pairs.
pub fn bce_mean(items: &[(f64, f64)]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Data("binary cross-entropy over an empty batch".into()));
    }
    let mut total = 0.0;
    for &(p, y) in items {
        total += bce(p, y)?;
    }
    Ok(total / items.len() as f64)
}

/// Mean clamped binary cross-entropy over scored pairs, as a graph node.
/// `pairs` holds `(u, v, is_positive)` with `(1, d)` embedding vars.
pub(crate) fn siamese_batch_loss_on_graph<F: Scalar>(
    g: &mut Graph<F>,
    head: HeadVars,
    pairs: &[(Var, Var, bool)],
) -> Result<Var> {
    if pairs.is_empty() {
        return Err(Error::Data("siamese loss over an empty batch".into()));
    }
    let lo: F = cast(PROB_FLOOR);
    let hi: F = cast(1.0 - PROB_FLOOR);
    let mut terms = Vec::with_capacity(pairs.len());
    for &(u, v, positive) in pairs {
        let p = score_on_graph(g, head, u, v)?;
        let p = g.clamp(p, lo, hi)?;
        let inner = if positive {
            p
        } else {
            let neg = g.scale(p, cast(-1.0))?;
            g.add_const(neg, F::one())?
        };
        let ln = g.ln(inner)?;
        terms.push(g.scale(ln, cast(-1.0))?);
    }
    let sum = g.sum_vars(&terms)?;
    g.scale(sum, cast(1.0 / pairs.len() as f64))
}

/// Squared L2 distance between two embeddings, accumulated in f64.
pub fn sq_l2(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "distance between embeddings of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum())
}

fn check_triplet_inputs(d2_ap: f64, d2_an: f64, margin: f64) -> Result<()> {
    if !(d2_ap.is_finite() && d2_an.is_finite() && margin.is_finite()) {
        return Err(Error::NonFinite("triplet distance or margin".into()));
    }
    if d2_ap < 0.0 || d2_an < 0.0 {
        return Err(Error::Data(format!(
            "squared distances must be nonnegative, got {d2_ap} and {d2_an}"
        )));
    }
    if margin <= 0.0 {
        return Err(Error::Config(format!("margin must be positive, got {margin}")));
    }
    Ok(())
}

/// max(d²(a,p) − d²(a,n) + margin, 0).
pub fn triplet_hinge(d2_ap: f64, d2_an: f64, margin: f64) -> Result<f64> {
    check_triplet_inputs(d2_ap, d2_an, margin)?;
    Ok((d2_ap - d2_an + margin).max(0.0))
}

/// Where a triplet stands relative to the margin, by squared distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripletClass {
    /// Negative at or inside the positive's distance: d²(a,n) ≤ d²(a,p).
    Hard,
    /// Negative farther than the positive but within the margin.
    SemiHard,
    /// Negative beyond the margin; the hinge is exactly zero.
    Easy,
}

impl fmt::Display for TripletClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripletClass::Hard => "hard",
            TripletClass::SemiHard => "semi-hard",
            TripletClass::Easy => "easy",
        })
    }
}

pub fn classify_triplet(d2_ap: f64, d2_an: f64, margin: f64) -> Result<TripletClass> {
    check_triplet_inputs(d2_ap, d2_an, margin)?;
    if d2_an <= d2_ap {
        Ok(TripletClass::Hard)
    } else if d2_an < d2_ap + margin {
        Ok(TripletClass::SemiHard)
    } else {
        Ok(TripletClass::Easy)
    }
}

/// Which triplet classes a training batch keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningStrategy {
    All,
    ExcludeEasy,
    SemiHardOnly,
    HardOnly,
}

impl MiningStrategy {
    pub fn keeps(self, class: TripletClass) -> bool {
        match self {
            MiningStrategy::All => true,
            MiningStrategy::ExcludeEasy => class != TripletClass::Easy,
            MiningStrategy::SemiHardOnly => class == TripletClass::SemiHard,
            MiningStrategy::HardOnly => class == TripletClass::Hard,
        }
    }
}

impl fmt::Display for MiningStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MiningStrategy::All => "all",
            MiningStrategy::ExcludeEasy => "exclude-easy",
            MiningStrategy::SemiHardOnly => "semi-hard",
            MiningStrategy::HardOnly => "hard",
        })
    }
}

impl FromStr for MiningStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<MiningStrategy> {
        match s {
            "all" => Ok(MiningStrategy::All),
            "exclude-easy" => Ok(MiningStrategy::ExcludeEasy),
            "semi-hard" => Ok(MiningStrategy::SemiHardOnly),
            "hard" => Ok(MiningStrategy::HardOnly),
            other => Err(Error::Config(format!(
                "unknown mining strategy {other:?} (expected all, exclude-easy, semi-hard, or hard)"
            ))),
        }
    }
}

/// Indices of the triplets a strategy keeps, in their original order.
pub fn mine(classes: &[TripletClass], strategy: MiningStrategy) -> Vec<usize> {
    classes
        .iter()
        .enumerate()
        .filter(|(_, c)| strategy.keeps(**c))
        .map(|(i, _)| i)
        .collect()
}

/// (hard, semi-hard, easy) tallies.
pub fn class_counts(classes: &[TripletClass]) -> [usize; 3] {
    let mut out = [0; 3];
    for c in classes {
        match c {
            TripletClass::Hard => out[0] += 1,
            TripletClass::SemiHard => out[1] += 1,
            TripletClass::Easy => out[2] += 1,
        }
    }
    out
}

/// Triplet hinge over a batch of `(anchor, positive, negative)` embedding
/// vars, summed by default, averaged when `mean` is set.
pub(crate) fn triplet_batch_loss_on_graph<F: Scalar>(
    g: &mut Graph<F>,
    items: &[(Var, Var, Var)],
    margin: f64,
    mean: bool,
) -> Result<Var> {
    if items.is_empty() {
        return Err(Error::Data("triplet loss over an empty batch".into()));
    }
    if !(margin.is_finite() && margin > 0.0) {
        return Err(Error::Config(format!("margin must be positive, got {margin}")));
    }
    let mut terms = Vec::with_capacity(items.len());
    for &(a, p, n) in items {
        let dap = g.sq_dist(a, p)?;
        let dan = g.sq_dist(a, n)?;
        let diff = g.sub(dap, dan)?;
        let shifted = g.add_const(diff, cast(margin))?;
        terms.push(g.relu(shifted)?);
    }
    let sum = g.sum_vars(&terms)?;
    if mean {
        g.scale(sum, cast(1.0 / items.len() as f64))
    } else {
        Ok(sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn combine_concatenates_views_and_absolute_difference() {
        let c = combine(&[1.0, 2.0], &[3.0, 1.0]).unwrap();
        assert_eq!(c, [1.0, 2.0, 3.0, 1.0, 2.0, 1.0]);
        assert!(combine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_head_scores_one_half() {
        let head = SiameseHead {
            weight: Array32::zeros(&[6, 1]),
            bias: Array32::zeros(&[1, 1]),
        };
        let p = siamese_score(&head, &[0.3, -0.7], &[1.5, 0.2]).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn bias_only_head_scores_through_the_sigmoid() {
        // σ(ln 9) = 9/10 regardless of the embeddings.
        let head = SiameseHead {
            weight: Array32::zeros(&[6, 1]),
            bias: Array32::from_vec(vec![1, 1], vec![9.0f32.ln()]).unwrap(),
        };
        let p = siamese_score(&head, &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert!((p - 0.9).abs() < 1e-6);
    }

    #[test]
    fn siamese_score_matches_manual_dot_product() {
        let head = SiameseHead {
            weight: Array32::from_vec(vec![6, 1], vec![0.1, -0.2, 0.3, 0.05, -0.4, 0.25]).unwrap(),
            bias: Array32::from_vec(vec![1, 1], vec![0.15]).unwrap(),
        };
        let u = [0.5f32, -1.0];
        let v = [0.25f32, 0.75];
        let feats = combine(&u, &v).unwrap();
        let logit: f32 = feats
            .iter()
            .zip(head.weight.data())
            .map(|(a, b)| a * b)
            .sum::<f32>()
            + 0.15;
        let expected = 1.0 / (1.0 + (-logit).exp());
        let p = siamese_score(&head, &u, &v).unwrap();
        assert!((p - expected).abs() < 1e-6);
    }

    #[test]
    fn bce_known_values() {
        assert!((bce(0.5, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce(0.9, 0.0).unwrap() - (-0.1f64.ln())).abs() < 1e-12);
        // Saturated predictions stay finite through the clamp.
        assert!((bce(0.0, 1.0).unwrap() - (-PROB_FLOOR.ln())).abs() < 1e-9);
        assert!(bce(1.0, 0.0).unwrap().is_finite());
        assert!(bce(1.2, 1.0).is_err());
        assert!(bce(0.5, 0.3).is_err());
    }

    #[test]
    fn bce_mean_averages() {
        let m = bce_mean(&[(0.5, 1.0), (0.9, 0.0)]).unwrap();
        let expected = (std::f64::consts::LN_2 + 10f64.ln()) / 2.0;
        assert!((m - expected).abs() < 1e-12);
        assert!(bce_mean(&[]).is_err());
    }

    #[test]
    fn siamese_batch_loss_matches_pure_bce() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let head = SiameseHead::init(3, &mut rng).unwrap();
        let pairs_data: [([f32; 3], [f32; 3], bool); 3] = [
            ([0.2, -0.4, 1.0], [0.1, 0.3, -0.2], true),
            ([1.5, 0.0, -0.5], [1.4, 0.1, -0.6], false),
            ([0.0, 0.0, 0.0], [2.0, -2.0, 2.0], true),
        ];
        let mut g: Graph<f32> = Graph::new();
        let hv = insert_head(&mut g, &head).unwrap();
        let mut pairs = Vec::new();
        let mut pure = Vec::new();
        for (u, v, y) in &pairs_data {
            let ul = g.leaf(Array32::from_vec(vec![1, 3], u.to_vec()).unwrap()).unwrap();
            let vl = g.leaf(Array32::from_vec(vec![1, 3], v.to_vec()).unwrap()).unwrap();
            pairs.push((ul, vl, *y));
            let p = siamese_score(&head, u, v).unwrap();
            pure.push((f64::from(p), if *y { 1.0 } else { 0.0 }));
        }
        let loss = siamese_batch_loss_on_graph(&mut g, hv, &pairs).unwrap();
        let got = f64::from(g.value(loss).item().unwrap());
        let expected = bce_mean(&pure).unwrap();
        assert!((got - expected).abs() < 1e-6, "graph {got} vs pure {expected}");
    }

    #[test]
    fn siamese_batch_loss_gradients_reach_embeddings_and_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let head = SiameseHead::init(2, &mut rng).unwrap();
        let mut g: Graph<f32> = Graph::new();
        let hv = insert_head(&mut g, &head).unwrap();
        let u = g.leaf(Array32::from_vec(vec![1, 2], vec![0.4, -0.8]).unwrap()).unwrap();
        let v = g.leaf(Array32::from_vec(vec![1, 2], vec![-0.1, 0.2]).unwrap()).unwrap();
        let loss = siamese_batch_loss_on_graph(&mut g, hv, &[(u, v, true)]).unwrap();
        let mut grads = g.backward(loss).unwrap();
        let gu = grads.take_or_zeros(u, &[1, 2]);
        let gw = grads.take_or_zeros(hv.weight, &[6, 1]);
        assert!(gu.iter().any(|&x| x != 0.0));
        assert!(gw.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn sq_l2_accumulates_in_f64() {
        assert_eq!(sq_l2(&[0.0, 3.0], &[4.0, 0.0]).unwrap(), 25.0);
        assert_eq!(sq_l2(&[1.0], &[1.0]).unwrap(), 0.0);
        assert!(sq_l2(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn hinge_known_values() {
        // Negative beyond the margin: satisfied, exactly zero.
        assert_eq!(triplet_hinge(1.0, 8.0, 5.0).unwrap(), 0.0);
        // Negative closer than the positive: 4 − 1 + 5.
        assert_eq!(triplet_hinge(4.0, 1.0, 5.0).unwrap(), 8.0);
        assert!(triplet_hinge(-1.0, 1.0, 5.0).is_err());
        assert!(triplet_hinge(1.0, 1.0, 0.0).is_err());
        assert!(triplet_hinge(f64::NAN, 1.0, 5.0).is_err());
    }

    #[test]
    fn taxonomy_boundaries() {
        let m = 5.0;
        assert_eq!(classify_triplet(2.0, 1.0, m).unwrap(), TripletClass::Hard);
        assert_eq!(classify_triplet(2.0, 2.0, m).unwrap(), TripletClass::Hard);
        assert_eq!(classify_triplet(2.0, 2.5, m).unwrap(), TripletClass::SemiHard);
        assert_eq!(classify_triplet(2.0, 6.9, m).unwrap(), TripletClass::SemiHard);
        assert_eq!(classify_triplet(2.0, 7.0, m).unwrap(), TripletClass::Easy);
        assert_eq!(classify_triplet(2.0, 12.0, m).unwrap(), TripletClass::Easy);
    }

    #[test]
    fn mining_strategies_filter_by_class_and_keep_order() {
        use TripletClass::*;
        let classes = [Hard, Easy, SemiHard, Hard];
        assert_eq!(mine(&classes, MiningStrategy::All), [0, 1, 2, 3]);
        assert_eq!(mine(&classes, MiningStrategy::ExcludeEasy), [0, 2, 3]);
        assert_eq!(mine(&classes, MiningStrategy::SemiHardOnly), [2]);
        assert_eq!(mine(&classes, MiningStrategy::HardOnly), [0, 3]);
        assert_eq!(class_counts(&classes), [2, 1, 1]);
    }

    #[test]
    fn mining_strategy_round_trips_through_strings() {
        for (s, m) in [
            ("all", MiningStrategy::All),
            ("exclude-easy", MiningStrategy::ExcludeEasy),
            ("semi-hard", MiningStrategy::SemiHardOnly),
            ("hard", MiningStrategy::HardOnly),
        ] {
            assert_eq!(s.parse::<MiningStrategy>().unwrap(), m);
            assert_eq!(m.to_string(), s);
        }
        assert!("hardest".parse::<MiningStrategy>().is_err());
    }

    #[test]
    fn triplet_batch_loss_on_identical_embeddings_is_margin_times_n() {
        let mut g: Graph<f32> = Graph::new();
        let e = g.leaf(Array32::from_vec(vec![1, 2], vec![0.3, -0.6]).unwrap()).unwrap();
        let items = [(e, e, e), (e, e, e), (e, e, e)];
        let sum = triplet_batch_loss_on_graph(&mut g, &items, 5.0, false).unwrap();
        assert_eq!(g.value(sum).item().unwrap(), 15.0);
        let mean = triplet_batch_loss_on_graph(&mut g, &items, 5.0, true).unwrap();
        assert_eq!(g.value(mean).item().unwrap(), 5.0);
    }

    #[test]
    fn triplet_batch_loss_matches_pure_hinges() {
        let a = [0.0f32, 0.0];
        let p = [1.0f32, 0.0];
        let n = [0.0f32, 2.0];
        let mut g: Graph<f32> = Graph::new();
        let al = g.leaf(Array32::from_vec(vec![1, 2], a.to_vec()).unwrap()).unwrap();
        let pl = g.leaf(Array32::from_vec(vec![1, 2], p.to_vec()).unwrap()).unwrap();
        let nl = g.leaf(Array32::from_vec(vec![1, 2], n.to_vec()).unwrap()).unwrap();
        let loss = triplet_batch_loss_on_graph(&mut g, &[(al, pl, nl)], 5.0, false).unwrap();
        let expected = triplet_hinge(
            sq_l2(&a, &p).unwrap(),
            sq_l2(&a, &n).unwrap(),
            5.0,
        )
        .unwrap();
        let got = f64::from(g.value(loss).item().unwrap());
        assert!((got - expected).abs() < 1e-6);
    }

    #[test]
    fn triplet_batch_loss_rejects_empty_and_bad_margin() {
        let mut g: Graph<f32> = Graph::new();
        let e = g.leaf(Array32::from_vec(vec![1, 1], vec![1.0]).unwrap()).unwrap();
        assert!(triplet_batch_loss_on_graph(&mut g, &[], 5.0, false).is_err());
        assert!(triplet_batch_loss_on_graph(&mut g, &[(e, e, e)], 0.0, false).is_err());
    }

    proptest! {
        #[test]
        fn hinge_is_zero_exactly_on_easy_triplets(
            d2_ap in 0.0f64..20.0,
            d2_an in 0.0f64..20.0,
            margin in 0.1f64..10.0,
        ) {
            let h = triplet_hinge(d2_ap, d2_an, margin).unwrap();
            let class = classify_triplet(d2_ap, d2_an, margin).unwrap();
            prop_assert_eq!(h == 0.0, class == TripletClass::Easy);
        }

        #[test]
        fn classification_depends_only_on_the_distance_gap(
            d2_ap in 0.0f64..10.0,
            d2_an in 0.0f64..10.0,
            margin in 0.1f64..10.0,
            shift in 0.0f64..50.0,
        ) {
            let base = classify_triplet(d2_ap, d2_an, margin).unwrap();
            let shifted = classify_triplet(d2_ap + shift, d2_an + shift, margin).unwrap();
            prop_assert_eq!(base, shifted);
        }

        #[test]
        fn hinge_monotone_in_both_distances(
            d2_ap in 0.0f64..10.0,
            d2_an in 0.0f64..10.0,
            margin in 0.1f64..10.0,
            bump in 0.0f64..5.0,
        ) {
            let h = triplet_hinge(d2_ap, d2_an, margin).unwrap();
            prop_assert!(triplet_hinge(d2_ap + bump, d2_an, margin).unwrap() >= h);
            prop_assert!(triplet_hinge(d2_ap, d2_an + bump, margin).unwrap() <= h);
        }
    }
}
