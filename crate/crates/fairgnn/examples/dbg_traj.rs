use fairgnn::data::{generate_synthetic, SyntheticConfig};
use fairgnn::graph::make_splits;
use fairgnn::loss::FairnessConfig;
use fairgnn::model::{EncoderKind, ModelParams};
use fairgnn::train::{train, TrainConfig};

fn main() {
    let cfg = SyntheticConfig {
        n: 1000, label_balance: 0.5, group_balance: 0.5,
        label_attr_correlation: 0.6,
        intra_edge_prob: 0.02, inter_edge_prob: 0.004,
        feature_dim: 16,
        feature_shift_y0_s0: 0.0, feature_shift_y0_s1: 0.3,
        feature_shift_y1_s0: 1.7, feature_shift_y1_s1: 2.0,
        seed: 7,
    };
    let dataset = generate_synthetic(&cfg).unwrap();
    let splits = make_splits(&dataset, 100, 1).unwrap();
    let init = ModelParams::init(EncoderKind::Gcn, 16, 16, 2, 0.2, 1).unwrap();
    let config = TrainConfig {
        epochs: 100, lr: 1e-2, seed: 1,
        fairness: FairnessConfig::new(0.0, 0.0).unwrap(),
        ..TrainConfig::default()
    };
    let (_, hist) = train(&dataset, &splits, init, &config).unwrap();
    for e in hist.epochs.iter().step_by(10) {
        println!("epoch {:3} loss {:.4} val bacc {:?} auc {:?} dsp {:?} deo {:?} hybrid {:.2}",
            e.epoch, e.pred_loss, e.val_metrics.bacc.map(|v| (v*10.0).round()/10.0),
            e.val_metrics.auc.map(|v| (v*10.0).round()/10.0),
            e.val_metrics.delta_sp.map(|v| (v*10.0).round()/10.0),
            e.val_metrics.delta_eo.map(|v| (v*10.0).round()/10.0), e.hybrid_score);
    }
    println!("best {}", hist.best_epoch);
}
