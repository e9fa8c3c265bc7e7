use glocal_core::attention::{attention_weights, sa_forward, LatentTensor, Matrix, SaWeights, SoftmaxMode};

fn row(m: &Matrix, j: usize) -> &[f64] {
    &m.data[j * m.cols..(j + 1) * m.cols]
}

fn qk() -> (Matrix, Matrix) {
    (
        Matrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap(),
        Matrix::from_vec(1, 3, vec![1.0, 0.25, -0.5]).unwrap(),
    )
}

#[test]
fn per_query_softmax_matches_high_precision_values() {
    // 40-digit reference, row j = query position
    let want = [
        [0.17529039214003668995, 0.039112573270687451954, 0.78559703458927585809],
        [0.31824018843939239939, 0.21872306959481309045, 0.46303674196579451016],
        [0.27860068919627303081, 0.58979766365681261827, 0.13160164714691435093],
    ];
    let (q, k) = qk();
    let beta = attention_weights(&q, &k, SoftmaxMode::PerQuery).unwrap();
    for (j, w) in want.iter().enumerate() {
        for (got, w) in row(&beta, j).iter().zip(w) {
            assert!((got - w).abs() < 1e-15, "{got} vs {w}");
        }
    }
}

#[test]
fn global_softmax_matches_high_precision_values() {
    let want = [
        0.10460281929123490432, 0.023340043820430509373, 0.46879731194407515106,
        0.07189239623017523107, 0.04941087315559194308, 0.10460281929123490432,
        0.04941087315559194308, 0.10460281929123490432, 0.023340043820430509373,
    ];
    let (q, k) = qk();
    let beta = attention_weights(&q, &k, SoftmaxMode::Global).unwrap();
    for (got, w) in beta.data.iter().zip(want) {
        assert!((got - w).abs() < 1e-15, "{got} vs {w}");
    }
    assert!((beta.data.iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

#[test]
fn uniform_attention_averages_the_value_map() {
    // zero query/key weights make every position attend uniformly
    let (c, h, w) = (8, 2, 2);
    let n = h * w;
    let data: Vec<f64> = (0..c * n).map(|i| (i as f64 * 0.7).sin()).collect();
    let f = LatentTensor::new(c, h, w, data.clone()).unwrap();
    let mut wts = SaWeights::seeded(c, 3).unwrap();
    wts.w_q.data.iter_mut().for_each(|v| *v = 0.0);
    wts.w_k.data.iter_mut().for_each(|v| *v = 0.0);
    let mut ident = Matrix::zeros(c, c);
    for i in 0..c {
        ident.set(i, i, 1.0);
    }
    wts.w_v = ident.clone();
    wts.w_o = ident;
    wts.gamma = 1.0;
    let out = sa_forward(&f, &wts, SoftmaxMode::PerQuery).unwrap();
    for ch in 0..c {
        let mean = data[ch * n..(ch + 1) * n].iter().sum::<f64>() / n as f64;
        for j in 0..n {
            let want = mean + data[ch * n + j];
            assert!((out.data.get(ch, j) - want).abs() < 1e-14);
        }
    }
}

#[test]
fn channel_mismatch_is_rejected() {
    let f = LatentTensor::new(16, 2, 2, vec![0.0; 64]).unwrap();
    let w = SaWeights::seeded(8, 0).unwrap();
    assert!(sa_forward(&f, &w, SoftmaxMode::PerQuery).is_err());
}
