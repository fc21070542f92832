//! Runs a pipeline configuration over several seeds and prints one line of
//! headline numbers per seed.
//!
//! cargo run --release -p stagewise --example seed_sweep -- configs/flagship.toml 0 10

use std::time::Instant;

use stagewise::pipeline::{run_multistage, PipelineConfig, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).ok_or("usage: seed_sweep CONFIG [FIRST_SEED] [COUNT]")?;
    let first: u64 = args.get(2).map_or(Ok(0), |s| s.parse())?;
    let count: u64 = args.get(3).map_or(Ok(10), |s| s.parse())?;
    let base = PipelineConfig::load(std::path::Path::new(path))?;
    let runs = tempfile_dir()?;
    let pct = |x: f64| format!("{:5.1}", 100.0 * x);
    for seed in first..first + count {
        let config = PipelineConfig {
            seed,
            run_id: format!("sweep-{seed}"),
            ..base.clone()
        };
        let start = Instant::now();
        let s = run_multistage(&config, &RunOptions::new(&runs))?;
        let s0 = &s.stages[0];
        let teachers: Vec<String> = s0.teachers.iter().map(|t| pct(t.test_with_lm.wer)).collect();
        let students: Vec<String> = s.students().iter().map(|t| pct(t.test_wer_with_lm.wer)).collect();
        let pseudo: Vec<String> = s
            .stages
            .iter()
            .map(|t| t.train_pseudo_wer_with_lm.map_or("-".into(), |b| pct(b.wer)))
            .collect();
        let base = |m: &str| s.baseline(m).map_or("-".into(), |b| pct(b.test_wer_with_lm.wer));
        let m = &s.tuning.domain_matrix;
        let n = m.len() as f64;
        let diag: f64 = (0..m.len()).map(|i| m[i][i].wer).sum::<f64>() / n;
        let off: f64 = m.iter().flatten().map(|b| b.wer).sum::<f64>() / (n * n - n).max(1.0) - diag / (n - 1.0).max(1.0);
        println!(
            "seed {seed:2} | {:5.1}s | in {} cross {} | a={} b={} | T [{}] top1 {} | S [{}] | pseudo [{}] nolm0 {} | KL {} Or {} | {:?}",
            start.elapsed().as_secs_f64(),
            pct(diag),
            pct(off),
            s.tuning.alpha,
            s.tuning.beta,
            teachers.join(" "),
            pct(s0.test_wer_with_lm.wer),
            students.join(" "),
            pseudo.join(" "),
            s0.train_pseudo_wer_no_lm.map_or("-".into(), |b| pct(b.wer)),
            base("S_KL"),
            base("S_Or"),
            s.trends(),
        );
    }
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("stagewise-sweep-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
