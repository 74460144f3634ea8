use proptest::prelude::*;
use vru_nn::{Graph, ParamStore, Tensor};

proptest! {
    #[test]
    fn losses_are_nonnegative(
        logits in prop::collection::vec(-30.0f64..30.0, 2..8),
        label_seed in 0usize..100,
        weight in 0.0f64..5.0,
        pred in prop::collection::vec(-10.0f64..10.0, 1..12),
        lambda in 0.0f64..1.0,
    ) {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(pred.clone()));
        let mut g = Graph::new(&store);
        let l = g.input(Tensor::vector(logits.clone()));
        let ce = g.softmax_ce(l, label_seed % logits.len(), weight).unwrap();
        prop_assert!(g.value(ce).item() >= 0.0);
        let a = g.input(Tensor::vector(pred.clone()));
        let b = g.input(Tensor::vector(pred.iter().map(|v| v * 0.5 - 1.0).collect()));
        let m = g.mse(a, b).unwrap();
        prop_assert!(g.value(m).item() >= 0.0);
        let r = g.l2_penalty(&[p], lambda).unwrap();
        prop_assert!(g.value(r).item() >= 0.0);
    }

    #[test]
    fn forward_is_bitwise_deterministic(data in prop::collection::vec(-5.0f64..5.0, 4 * 6 * 2), k in prop::collection::vec(-1.0f64..1.0, 3 * 3 * 2 * 2)) {
        let run = || {
            let store = ParamStore::new();
            let mut g = Graph::new(&store);
            let x = g.input(Tensor::from_vec(&[4, 6, 2], data.clone()).unwrap());
            let kv = g.input(Tensor::from_vec(&[3, 3, 2, 2], k.clone()).unwrap());
            let y = g.conv2d(x, kv, None, 2).unwrap();
            let y = g.relu(y);
            let y = g.maxpool(y, 2, 1).unwrap();
            g.value(y).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
