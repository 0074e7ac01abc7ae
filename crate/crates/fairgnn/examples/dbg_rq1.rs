use fairgnn::data::{generate_synthetic, SyntheticConfig};
use fairgnn::graph::make_splits;
use fairgnn::loss::FairnessConfig;
use fairgnn::model::{EncoderKind, ModelParams};
use fairgnn::train::{evaluate, train, TrainConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn main() {
    for ds_seed in 12..30u64 {
        let cfg = SyntheticConfig {
            n: 1000, label_balance: 0.5, group_balance: 0.5,
            label_attr_correlation: 0.6,
            intra_edge_prob: 0.02, inter_edge_prob: 0.004,
            feature_dim: 16,
            feature_shift_y0_s0: 0.0, feature_shift_y0_s1: 0.5,
            feature_shift_y1_s0: 1.0, feature_shift_y1_s1: 1.5,
            seed: ds_seed,
        };
        let dataset = generate_synthetic(&cfg).unwrap();
        let mut meds = vec![];
        for (alpha, beta) in [(0.0, 0.0), (1.0, 1.0)] {
            let mut dsp = vec![]; let mut deo = vec![]; let mut bacc = vec![];
            for seed in 0..5u64 {
                let splits = make_splits(&dataset, 100, seed).unwrap();
                let init = ModelParams::init(EncoderKind::Gcn, 16, 16, 2, 0.2, seed).unwrap();
                let config = TrainConfig {
                    epochs: 100, lr: 1e-2, seed,
                    fairness: FairnessConfig::new(alpha, beta).unwrap(),
                    ..TrainConfig::default()
                };
                let (model, _) = train(&dataset, &splits, init, &config).unwrap();
                let report = evaluate(&model.params, &dataset, &splits.test, 0.5, true).unwrap();
                dsp.push(report.delta_sp.unwrap());
                deo.push(report.delta_eo.unwrap());
                bacc.push(report.bacc.unwrap());
            }
            meds.push((median(bacc), median(dsp), median(deo)));
        }
        let (b0, s0, e0) = meds[0];
        let (b1, s1, e1) = meds[1];
        let nonvacuous = s0 > 1.0 && e0 > 1.0;
        let pass = s1 <= 0.7 * s0 && e1 <= 0.7 * e0 && b0 - b1 <= 5.0;
        println!("ds_seed {ds_seed}: base ({b0:.1}, {s0:.1}, {e0:.1}) eosp ({b1:.1}, {s1:.1}, {e1:.1}) pass={pass} nonvacuous={nonvacuous}");
    }
}
