mod common;

use common::{numeric_grad, random_batch, rel_err, rng, signature, tiny_model, KINDS, REL};
use kgmono::datalog::{Atom, Dataset};
use kgmono::gnn::{AggBudget, MessageDirection};
use kgmono::training::{loss_and_grad, params, random_model, Batch, InitSpec};
use rand::Rng;

#[test]
fn gradients_match_central_differences() {
    let mut r = rng(9);
    for kind in KINDS {
        for budget in [AggBudget::MAX, AggBudget::SUM] {
            let mut done = 0;
            while done < 20 {
                let m = tiny_model(&mut r, kind, budget);
                let batch = random_batch(&mut r, &m);
                if !common::smooth_at(&m, &batch, 1e-3) {
                    continue;
                }
                let pw = if r.gen_bool(0.5) { 50.0 } else { 1.0 };
                let (_, g) = loss_and_grad(&m, &batch, pw).unwrap();
                let analytic = params(&g);
                let numeric = numeric_grad(&m, &batch, pw);
                for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
                    assert!(rel_err(*a, *n) <= REL, "{kind:?} {budget}: parameter {i} analytic {a} numeric {n}");
                }
                done += 1;
            }
        }
    }
}

#[test]
fn zero_weight_batch_has_zero_gradient() {
    let mut r = rng(3);
    let m = tiny_model(&mut r, kgmono::scoring::ScoringKind::Rescal, AggBudget::SUM);
    let mut batch = random_batch(&mut r, &m);
    // no examples: loss and every gradient are exactly zero
    batch.examples.clear();
    let (loss, g) = loss_and_grad(&m, &batch, 50.0).unwrap();
    assert_eq!(loss, 0.0);
    assert!(params(&g).iter().all(|&x| x == 0.0));
}

#[test]
fn unselected_neighbours_get_no_gradient() {
    // c0 has two P1-neighbours; with max aggregation only the larger one is
    // on a path to the score, so the smaller one's features get nothing.
    let sig = signature(1, 1);
    let spec = InitSpec {
        dims: vec![1],
        budgets: vec![AggBudget::MAX],
        direction: MessageDirection::AgainstEdges,
        scoring: kgmono::scoring::ScoringKind::Distmult,
        nonnegative: true,
        universal_unary: None,
    };
    let mut m = random_model(&sig, &spec, 1).unwrap();
    let l = &mut m.gnn.layers[0];
    l.a.data = vec![0.0];
    l.b[0].data = vec![1.0];
    l.bias = vec![0.5];
    let input =
        Dataset::from_facts([Atom::binary("P1", "c0", "c1"), Atom::binary("P1", "c0", "c2"), Atom::unary("U1", "c1")]);
    let batch = Batch::new(&m, &input, &[Atom::binary("P1", "c0", "c0")], &[]).unwrap();
    let cache = m.gnn.forward_cached(&batch.graph).unwrap();
    let c0 = batch.graph.vertex("c0").unwrap();
    let c1 = batch.graph.vertex("c1").unwrap();
    assert_eq!(cache.selected[0][0][c0][0], vec![c1]);
    let (_, g) = loss_and_grad(&m, &batch, 1.0).unwrap();
    // dL/dB = dz * agg, agg = 1 from c1
    assert!(g.gnn.layers[0].b[0].data[0] != 0.0);
    // A multiplies c0's own zero label: no gradient
    assert_eq!(g.gnn.layers[0].a.data[0], 0.0);
}
