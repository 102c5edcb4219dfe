use hpqs::autodiff::{Tape, Tensor};
use hpqs::harness::mnist::load_mnist;
use hpqs::tasks::qt::{build_qt, generate_for_eval, QtConfig};
use hpqs::tasks::Variant;
use std::path::Path;

#[test]
fn probe() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let pair = load_mnist(&root).unwrap();
    let train = pair.train.take(64);
    let config = QtConfig { variant: Variant::HpqsFinite, ..QtConfig::desk() };
    let qm = build_qt(&config, 0).unwrap();
    let a = generate_for_eval(&qm, 0, 0).unwrap();
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let amean = a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64;
    println!("a len {} max {:.6} mean|a| {:.6}", a.len(), amax, amean);
    let idx: Vec<usize> = (0..64).collect();
    let images = train.image_batch(&idx).unwrap();
    let targets = train.label_batch(&idx);
    let mut tape = Tape::new();
    let an = tape.constant(Tensor::new(vec![a.len()], a.clone()).unwrap()).unwrap();
    let logits = qm.spec.forward(&mut tape, an, &images).unwrap();
    let lv = tape.value(logits).data().to_vec();
    println!("logits row0: {:?}", &lv[..10]);
    let sm = tape.softmax(logits).unwrap();
    let loss = tape.nll_loss(sm, &targets).unwrap();
    println!("loss {:.8}", tape.value(loss).item().unwrap());
}
