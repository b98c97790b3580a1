use proptest::prelude::*;
use rbc_grad::{Graph, Tensor};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, rows * cols)
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(data in matrix(3, 6)) {
        let mut g = Graph::<f64>::detached();
        let x = g.constant_from(vec![3, 6], data).unwrap();
        let y = g.softmax(x).unwrap();
        for row in g.data(y).chunks(6) {
            prop_assert!(row.iter().all(|&p| p > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_softmax_matches_log_of_softmax(data in matrix(2, 5)) {
        let mut g = Graph::<f64>::detached();
        let x = g.constant_from(vec![2, 5], data).unwrap();
        let s = g.softmax(x).unwrap();
        let ls = g.log_softmax(x).unwrap();
        for (a, b) in g.data(s).iter().zip(g.data(ls)) {
            prop_assert!((a.ln() - b).abs() < 1e-10);
        }
    }

    #[test]
    fn broadcast_add_commutes(a in matrix(4, 3), b in matrix(1, 3)) {
        let mut g = Graph::<f64>::detached();
        let x = g.constant_from(vec![4, 3], a).unwrap();
        let y = g.constant_from(vec![3], b).unwrap();
        let l = g.add(x, y).unwrap();
        let r = g.add(y, x).unwrap();
        prop_assert_eq!(g.data(l), g.data(r));
    }

    #[test]
    fn reshape_round_trips(data in matrix(4, 6)) {
        let mut g = Graph::<f64>::detached();
        let x = g.constant_from(vec![4, 6], data.clone()).unwrap();
        let r = g.reshape(x, vec![2, 3, 4]).unwrap();
        let back = g.reshape(r, vec![4, 6]).unwrap();
        prop_assert_eq!(g.data(back), data.as_slice());
    }

    #[test]
    fn concat_then_slice_recovers_parts(a in matrix(2, 3), b in matrix(2, 4)) {
        let mut g = Graph::<f64>::detached();
        let x = g.constant_from(vec![2, 3], a.clone()).unwrap();
        let y = g.constant_from(vec![2, 4], b.clone()).unwrap();
        let c = g.concat(&[x, y], 1).unwrap();
        let sx = g.slice(c, 1, 0, 3).unwrap();
        let sy = g.slice(c, 1, 3, 7).unwrap();
        prop_assert_eq!(g.data(sx), a.as_slice());
        prop_assert_eq!(g.data(sy), b.as_slice());
    }

    #[test]
    fn blur_preserves_constant_images(v in 0.0f64..1.0) {
        let img = Tensor::new(vec![6, 7, 3], vec![v; 126]).unwrap();
        let mut g = Graph::<f64>::detached();
        let x = g.constant(img);
        let y = g.gaussian_blur(x, 5, 1.0).unwrap();
        prop_assert!(g.data(y).iter().all(|&p| (p - v).abs() < 1e-12));
    }

    #[test]
    fn avg_pool_preserves_mean(data in prop::collection::vec(0.0f64..1.0, 8 * 8 * 2)) {
        let mean: f64 = data.iter().sum::<f64>() / data.len() as f64;
        let mut g = Graph::<f64>::detached();
        let x = g.constant_from(vec![8, 8, 2], data).unwrap();
        let y = g.avg_pool(x, 4).unwrap();
        let pooled: f64 = g.data(y).iter().sum::<f64>() / g.data(y).len() as f64;
        prop_assert!((pooled - mean).abs() < 1e-12);
    }
}
