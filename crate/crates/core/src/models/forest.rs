//! Random forest classifier: bagged Gini trees with per-split feature
//! subsampling; the prediction is the unweighted mean of the per-tree
//! class-frequency leaves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::features::FeatureVariant;
use crate::okta::N_CLASSES;
use crate::pmf::Pmf;
use crate::Result;

use super::cart::{CartParams, CartTarget, CartTree, Node, SortedColumns};
use super::record::{RecordReader, RecordWriter};
use super::TrainSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfParams {
    pub n_trees: usize,
    pub depth: usize,
    pub mtry: usize,
    pub min_leaf: u64,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 1000,
            depth: 3,
            mtry: 2,
            min_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfModel {
    variant: FeatureVariant,
    dim: usize,
    params: RfParams,
    trees: Vec<CartTree>,
}

impl RfModel {
    pub fn from_parts(variant: FeatureVariant, params: RfParams, trees: Vec<CartTree>) -> Result<RfModel> {
        if trees.is_empty() {
            return Err(Error::config("a forest needs at least one tree"));
        }
        Ok(RfModel {
            variant,
            dim: variant.dim(),
            params,
            trees,
        })
    }

    pub fn variant(&self) -> FeatureVariant {
        self.variant
    }

    pub fn params(&self) -> &RfParams {
        &self.params
    }

    pub fn trees(&self) -> &[CartTree] {
        &self.trees
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Pmf> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "forest feature row",
                expected: self.dim,
                got: row.len(),
            });
        }
        let mut acc = [0.0f64; N_CLASSES];
        for tree in &self.trees {
            let freqs = tree.predict_classes(row);
            for c in 0..N_CLASSES {
                acc[c] += freqs[c];
            }
        }
        let n = self.trees.len() as f64;
        for a in acc.iter_mut() {
            *a /= n;
        }
        Pmf::from_weights(&acc)
    }

    pub fn to_record(&self) -> String {
        let mut w = RecordWriter::new("rf");
        w.str_field("variant", self.variant.id());
        w.usize_field("dim", self.dim);
        w.usize_field("n_trees", self.params.n_trees);
        w.usize_field("depth", self.params.depth);
        w.usize_field("mtry", self.params.mtry);
        w.str_field("min_leaf", &self.params.min_leaf.to_string());
        w.str_field("seed", &self.params.seed.to_string());
        for tree in &self.trees {
            write_tree(&mut w, tree);
        }
        w.finish()
    }

    pub(crate) fn parse(r: &mut RecordReader) -> Result<RfModel> {
        let variant = FeatureVariant::from_id(&r.expect_str("variant")?)
            .map_err(|_| Error::parse(r.line(), "unknown feature variant"))?;
        let dim = r.expect_usize("dim")?;
        if dim != variant.dim() {
            return Err(Error::parse(r.line(), "dim does not match variant"));
        }
        let n_trees = r.expect_usize("n_trees")?;
        let depth = r.expect_usize("depth")?;
        let mtry = r.expect_usize("mtry")?;
        let min_leaf: u64 = r
            .expect_str("min_leaf")?
            .parse()
            .map_err(|_| Error::parse(r.line(), "bad min_leaf"))?;
        let seed: u64 = r
            .expect_str("seed")?
            .parse()
            .map_err(|_| Error::parse(r.line(), "bad seed"))?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            trees.push(read_tree(r)?);
        }
        RfModel::from_parts(
            variant,
            RfParams {
                n_trees,
                depth,
                mtry,
                min_leaf,
                seed,
            },
            trees,
        )
    }
}

/// Fits a forest: each tree is grown on a bootstrap resample (drawn with
/// replacement, same size) with `mtry` features per split. One seeded
/// stream drives resampling and feature sampling in tree order, so the
/// fit is deterministic.
pub fn rf_fit(train: &TrainSet, params: &RfParams) -> Result<RfModel> {
    if params.n_trees == 0 {
        return Err(Error::config("n_trees must be at least 1"));
    }
    if train.n() == 0 {
        return Err(Error::EmptyTrainingSet("forest fit"));
    }
    let n = train.n();
    let columns = SortedColumns::new(train);
    let cart = CartParams {
        max_depth: params.depth,
        mtry: params.mtry,
        min_leaf: params.min_leaf,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut counts = vec![0u32; n];
    for _ in 0..params.n_trees {
        counts.fill(0);
        for _ in 0..n {
            counts[rng.gen_range(0..n)] += 1;
        }
        trees.push(super::cart::grow_with_columns(
            train,
            &columns,
            &CartTarget::Gini,
            Some(&counts),
            &cart,
            &mut rng,
        )?);
    }
    RfModel::from_parts(train.variant(), *params, trees)
}

/// One tree as record lines: a node count, then one line per node.
pub(crate) fn write_tree(w: &mut RecordWriter, tree: &CartTree) {
    w.usize_field("tree", tree.nodes().len());
    for node in tree.nodes() {
        let line = match node {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => format!("s {feature} {threshold} {left} {right}"),
            Node::ClassLeaf(freqs) => {
                let body: Vec<String> = freqs.iter().map(|f| f.to_string()).collect();
                format!("c {}", body.join(" "))
            }
            Node::ValueLeaf(v) => format!("v {v}"),
        };
        w.str_field("node", &line);
    }
}

pub(crate) fn read_tree(r: &mut RecordReader) -> Result<CartTree> {
    let n_nodes = r.expect_usize("tree")?;
    if n_nodes == 0 {
        return Err(Error::parse(r.line(), "empty tree"));
    }
    let mut nodes = Vec::with_capacity(n_nodes);
    for at in 0..n_nodes {
        let body = r.expect_rest("node")?;
        let toks: Vec<&str> = body.split_whitespace().collect();
        let bad = || Error::parse(r.line(), "malformed tree node");
        let node = match toks.first().copied() {
            Some("s") if toks.len() == 5 => {
                let feature: usize = toks[1].parse().map_err(|_| bad())?;
                let threshold: f64 = toks[2].parse().map_err(|_| bad())?;
                let left: u32 = toks[3].parse().map_err(|_| bad())?;
                let right: u32 = toks[4].parse().map_err(|_| bad())?;
                // Children must point forward; keeps the walk acyclic.
                if left as usize >= n_nodes || right as usize >= n_nodes
                    || left as usize <= at || right as usize <= at
                {
                    return Err(Error::parse(r.line(), "tree child index out of order"));
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                }
            }
            Some("c") if toks.len() == 1 + N_CLASSES => {
                let mut freqs = [0.0; N_CLASSES];
                for (f, t) in freqs.iter_mut().zip(&toks[1..]) {
                    *f = t.parse().map_err(|_| bad())?;
                }
                Node::ClassLeaf(freqs)
            }
            Some("v") if toks.len() == 2 => {
                Node::ValueLeaf(toks[1].parse().map_err(|_| bad())?)
            }
            _ => return Err(bad()),
        };
        nodes.push(node);
    }
    Ok(CartTree::from_nodes(nodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_data::noisy_ordinal_set;
    use crate::models::Model;
    use approx::assert_abs_diff_eq;

    fn forest_params(n_trees: usize, depth: usize) -> RfParams {
        RfParams {
            n_trees,
            depth,
            mtry: 2,
            min_leaf: 1,
            seed: 42,
        }
    }

    #[test]
    fn same_seed_gives_identical_forests() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let train = noisy_ordinal_set(120, FeatureVariant::Mlr6, &mut rng);
        let a = rf_fit(&train, &forest_params(20, 3)).unwrap();
        let b = rf_fit(&train, &forest_params(20, 3)).unwrap();
        assert_eq!(a.to_record(), b.to_record());
    }

    #[test]
    fn depth_zero_forest_approaches_the_training_marginal() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let train = noisy_ordinal_set(200, FeatureVariant::Mlr6, &mut rng);
        let marginal = train.class_frequencies();
        let model = rf_fit(&train, &forest_params(400, 0)).unwrap();
        let pmf = model.predict_row(&[0.3; 6]).unwrap();
        for c in 0..9 {
            assert!(
                (pmf.probs()[c] - marginal[c]).abs() < 0.03,
                "class {c}: {} vs marginal {}",
                pmf.probs()[c],
                marginal[c]
            );
        }
    }

    #[test]
    fn more_trees_move_noise_predictions_toward_the_marginal() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let train = noisy_ordinal_set(150, FeatureVariant::Mlr6, &mut rng);
        let marginal = train.class_frequencies();
        let deviation = |model: &RfModel| -> f64 {
            let mut worst: f64 = 0.0;
            for probe in 0..5 {
                let x = [0.15 * probe as f64 + 0.1; 6];
                let pmf = model.predict_row(&x).unwrap();
                for c in 0..9 {
                    worst = worst.max((pmf.probs()[c] - marginal[c]).abs());
                }
            }
            worst
        };
        let small = rf_fit(&train, &forest_params(10, 2)).unwrap();
        let large = rf_fit(&train, &forest_params(500, 2)).unwrap();
        assert!(
            deviation(&large) < deviation(&small),
            "500 trees should sit closer to the marginal than 10"
        );
    }

    #[test]
    fn prediction_is_the_mean_of_leaf_vectors() {
        let mut freqs_a = [0.0; 9];
        freqs_a[0] = 0.5;
        freqs_a[8] = 0.5;
        let mut freqs_b = [0.0; 9];
        freqs_b[4] = 1.0;
        let tree_a = CartTree::from_nodes(vec![Node::ClassLeaf(freqs_a)]);
        let tree_b = CartTree::from_nodes(vec![Node::Split {
            feature: 0,
            threshold: 0.5,
            left: 1,
            right: 2,
        }, Node::ClassLeaf(freqs_b), Node::ClassLeaf(freqs_a)]);
        let model = RfModel::from_parts(
            FeatureVariant::Mlr6,
            forest_params(2, 1),
            vec![tree_a, tree_b],
        )
        .unwrap();
        let pmf = model.predict_row(&[0.2; 6]).unwrap();
        assert_abs_diff_eq!(pmf.probs()[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf.probs()[4], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf.probs()[8], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn tree_order_does_not_matter() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let train = noisy_ordinal_set(100, FeatureVariant::Mlr6, &mut rng);
        let model = rf_fit(&train, &forest_params(15, 3)).unwrap();
        let mut reversed_trees = model.trees().to_vec();
        reversed_trees.reverse();
        let reversed =
            RfModel::from_parts(model.variant(), *model.params(), reversed_trees).unwrap();
        let x = [0.4; 6];
        let a = model.predict_row(&x).unwrap();
        let b = reversed.predict_row(&x).unwrap();
        for c in 0..9 {
            assert_abs_diff_eq!(a.probs()[c], b.probs()[c], epsilon = 1e-12);
        }
    }

    #[test]
    fn record_round_trip_is_bitwise() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let train = noisy_ordinal_set(90, FeatureVariant::Full7, &mut rng);
        let model = rf_fit(
            &train,
            &RfParams {
                n_trees: 8,
                depth: 3,
                mtry: 3,
                min_leaf: 2,
                seed: 9,
            },
        )
        .unwrap();
        let text = model.to_record();
        let back = match Model::from_record(&text).unwrap() {
            Model::Rf(m) => m,
            _ => panic!("wrong kind"),
        };
        assert_eq!(model, back);
        assert_eq!(text, back.to_record());
    }

    #[test]
    fn wrong_row_width_is_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let train = noisy_ordinal_set(50, FeatureVariant::Mlr6, &mut rng);
        let model = rf_fit(&train, &forest_params(3, 2)).unwrap();
        assert!(matches!(
            model.predict_row(&[0.5; 7]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
