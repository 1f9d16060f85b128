//! Runs the reference experiment and prints per-scorer AUROC for the
//! cross-entropy baseline and the full model.
//!
//! `cargo run --release -p bootood-core --example reference -- [key=value ...]`
//!
//! Each argument is a configuration line, e.g. `seed=3` or `near_jitter=0.5`.

use std::time::Instant;

use bootood::config::RunConfig;
use bootood::experiment::{run_baseline, run_bootood, ExperimentData};

fn main() -> bootood::Result<()> {
    let text: String = std::env::args().skip(1).map(|a| a + "\n").collect();
    let cfg = RunConfig::from_toml(&text)?.experiment()?;
    let data = ExperimentData::generate(&cfg)?;
    let start = Instant::now();
    let (out, boot) = run_bootood(&cfg, &data)?;
    let elapsed = start.elapsed();
    let (_, base) = run_baseline(&cfg, &data)?;
    println!(
        "phase 2 from iteration {:?} (after epoch {:?}), trained in {elapsed:.2?}",
        out.record.phase2_start, out.record.phase1_epochs
    );
    let nc: Vec<String> = out
        .record
        .epochs
        .iter()
        .map(|e| {
            format!(
                "{}:{:.4}/{:.3}/{:.3}",
                e.epoch,
                e.nc.map_or(f64::NAN, |n| n.nc1),
                e.nc.map_or(f64::NAN, |n| n.norm_cv),
                e.train_error
            )
        })
        .collect();
    println!("epoch:nc1/cv/err {}", nc.join(" "));
    if let Some(init) = out.record.initial.and_then(|e| e.nc) {
        println!("nc1 untrained {:.4}", init.nc1);
    }
    if let Some((first, last)) = out.record.nc1_over_phase1() {
        println!("nc1 epoch 1 {first:.4} -> phase-1 end {last:.5} ({:.1}x)", first / last);
    }
    println!("{:<8} {:<5} {:>8} {:>8}", "scorer", "set", "base", "boot");
    for (b, o) in base.reports.iter().zip(&boot.reports) {
        println!("{:<8} {:<5} {:>8.4} {:>8.4}", o.scorer, o.ood_set, b.auroc, o.auroc);
    }
    let ev = &boot.evaluator;
    let mean_radius = |x: &bootood::numeric::Matrix| -> bootood::Result<f64> {
        let r = bootood::diagnostics::radii(&ev.features(x)?, &ev.ctx.center)?;
        Ok(r.iter().sum::<f64>() / r.len() as f64)
    };
    let id_feats = ev.features(&data.splits.test.inputs)?;
    let mut rng = bootood::numeric::SeededRng::new(9);
    let pseudo = bootood::pseudo_ood::generate(&id_feats, id_feats.rows(), 1.0, 1, &mut rng)?;
    let pr = bootood::diagnostics::radii(&pseudo.raw, &ev.ctx.center)?;
    println!(
        "r_ref {:.3}; mean radius id {:.3} near {:.3} far {:.3} pseudo {:.3}",
        out.geometry.r_ref,
        mean_radius(&data.splits.test.inputs)?,
        mean_radius(&data.ood.near)?,
        mean_radius(&data.ood.far)?,
        pr.iter().sum::<f64>() / pr.len() as f64
    );
    println!("id acc: base {:.4} boot {:.4}", base.id_acc(), boot.id_acc());
    println!(
        "best near: base {:.4} boot {:.4}",
        base.best_auroc("near"),
        boot.best_auroc("near")
    );
    let ordered = |r: &bootood::experiment::RunResult| {
        bootood::scorers::ScorerId::ALL
            .iter()
            .filter(|&&s| r.auroc(s, "near") < r.auroc(s, "far"))
            .count()
    };
    println!(
        "SUMMARY base_near {:.4} boot_near {:.4} gain {:+.4} near<far base {}/5 boot {}/5 acc {:.4}/{:.4}",
        base.best_auroc("near"),
        boot.best_auroc("near"),
        boot.best_auroc("near") - base.best_auroc("near"),
        ordered(&base),
        ordered(&boot),
        base.id_acc(),
        boot.id_acc()
    );
    Ok(())
}
