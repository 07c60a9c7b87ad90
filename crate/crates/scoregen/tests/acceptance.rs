//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Every experiment goes through the same configuration parser and
//! experiment functions as the command line. Each run's CSVs are kept so
//! the determinism criterion can repeat every run and compare bytes.

use std::time::Instant;

use scoregen::config::Command;
use scoregen::experiments::{self, Context};
use scoregen::output::Artifacts;
use scoregen::{ExperimentConfig, Table};
use scoregen_core::field::{NetworkField, ScoreField};
use scoregen_core::math::{linspace, logspace};
use scoregen_core::mlp::{dsm_gradient, dsm_loss, DsmBatch, TrainableNet};
use scoregen_core::rng;
use scoregen_core::schedule::noise_scale;
use scoregen_core::DiffusionSchedule;

struct Run {
    label: String,
    toml: String,
    command: Command,
    csv: Vec<(String, Vec<u8>)>,
}

#[derive(Default)]
struct Suite {
    runs: Vec<Run>,
    failures: usize,
}

impl Suite {
    /// Runs an experiment from TOML text and keeps its CSV bytes.
    fn run(&mut self, label: &str, toml: &str, command: Command) -> Result<Artifacts, String> {
        let arts = execute(toml, command)?;
        let csv = arts.tables.iter().map(|t| (t.name.clone(), t.to_csv())).collect();
        self.runs.push(Run { label: label.into(), toml: toml.into(), command, csv });
        Ok(arts)
    }

    fn report(&mut self, id: usize, name: &str, outcome: Result<String, String>, started: Instant) {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  criterion {id:>2}  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL  criterion {id:>2}  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
}

fn execute(toml: &str, command: Command) -> Result<Artifacts, String> {
    let config = ExperimentConfig::from_toml(toml).map_err(|e| e.to_string())?;
    let ctx = Context::new(&config, command).map_err(|e| e.to_string())?;
    experiments::run(&ctx, command).map_err(|e| e.to_string())
}

fn table<'a>(arts: &'a Artifacts, name: &str) -> &'a Table {
    arts.tables.iter().find(|t| t.name == name).unwrap_or_else(|| panic!("missing table {name}"))
}

fn column(t: &Table, rows: &[&Vec<String>], name: &str) -> Vec<f64> {
    rows.iter().map(|r| t.value(r, name).unwrap_or(f64::NAN)).collect()
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn seeds(k: u64) -> String {
    let list: Vec<String> = (0..k).map(|s| s.to_string()).collect();
    format!("seeds = [{}]", list.join(", "))
}

const PAIR: &str = "[target]\nkind = \"symmetric_pair\"\ncenter = 2.0\nvariance = 0.25\n";
const NORMAL: &str = "[target]\nkind = \"gaussian\"\ndim = 1\nvariance = 1.0\n";

fn criteria_1_2(suite: &mut Suite) {
    let start = Instant::now();
    let toml = format!(
        "{}\n{PAIR}\n[rates]\nn = [128, 256, 512, 1024, 2048, 4096, 8192]\nsigma = [0.5]\n",
        seeds(20)
    );
    let arts = match suite.run("kde rate over n", &toml, Command::Rates) {
        Ok(a) => a,
        Err(e) => {
            suite.report(1, "kernel score rate", Err(e.clone()), start);
            suite.report(2, "uniform score bound", Err(e), start);
            return;
        }
    };
    let t = table(&arts, "rates");
    let summary: Vec<_> = t.rows_where("kind", "summary").collect();
    let slope = summary.first().and_then(|r| t.value(r, "slope")).unwrap_or(f64::NAN);
    let ok = within(slope, -1.35, -0.70);
    let detail = format!("slope {slope:.4} (want [-1.35, -0.70])");
    suite.report(1, "kernel score rate", if ok { Ok(detail) } else { Err(detail) }, start);

    let cells: Vec<_> = t.rows_where("kind", "cell").collect();
    let violations: f64 = column(t, &cells, "violations").iter().sum();
    let evaluations: f64 = column(t, &cells, "evaluations").iter().sum();
    let worst = column(t, &cells, "worst_bound_ratio").into_iter().fold(0.0, f64::max);
    let detail = format!("{violations} violations in {evaluations} evaluations, largest |score| / bound {worst:.4}");
    let ok = violations == 0.0 && evaluations > 0.0;
    suite.report(2, "uniform score bound", if ok { Ok(detail) } else { Err(detail) }, start);
}

fn criterion_3(suite: &mut Suite) {
    let start = Instant::now();
    let toml = format!("{}\n{PAIR}\n[rates]\nn = [4096]\nsigma = []\nt0 = [0.2, 0.1, 0.05, 0.025]\n", seeds(10));
    let outcome = suite.run("time-integrated rate", &toml, Command::Rates).and_then(|arts| {
        let t = table(&arts, "rates");
        let s: Vec<_> = t.rows_where("kind", "integrated_summary").collect();
        let slope = s.first().and_then(|r| t.value(r, "slope")).unwrap_or(f64::NAN);
        let detail = format!("slope {slope:.4} over t0 (want [-0.9, -0.2])");
        if within(slope, -0.9, -0.2) {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
    suite.report(3, "time-integrated score rate", outcome, start);
}

fn criterion_4(suite: &mut Suite) {
    let start = Instant::now();
    let toml = format!("{}\n{PAIR}\n[sweep_kl]\nn = [128, 256, 512, 1024, 2048, 4096]\nsigma = 0.5\n", seeds(20));
    let outcome = suite.run("smoothed empirical KL", &toml, Command::SweepKl).and_then(|arts| {
        let t = table(&arts, "sweep_kl");
        let s: Vec<_> = t.rows_where("kind", "summary").collect();
        let slope = s.first().and_then(|r| t.value(r, "slope")).unwrap_or(f64::NAN);
        let detail = format!("slope {slope:.4} (want [-1.3, -0.7])");
        if within(slope, -1.3, -0.7) {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
    suite.report(4, "smoothed empirical KL decay", outcome, start);
}

/// Builds one network and returns its certificate row.
fn certificate(suite: &mut Suite, label: &str, net_section: &str) -> Result<(Table, Artifacts), String> {
    let toml = format!("{PAIR}\n[build_net]\n{net_section}\n");
    let arts = suite.run(label, &toml, Command::BuildNet)?;
    Ok((table(&arts, "certificates").clone(), arts))
}

fn criterion_5(suite: &mut Suite) {
    let start = Instant::now();
    let levels: &[(&str, &str, &str)] = &[
        ("square", "width = 4\ndepth = 2", "width = 4\ndepth = 3"),
        ("product", "width = 2\ndepth = 2", "width = 4\ndepth = 2"),
        ("monomial", "k = 2\nwidth = 2\ndepth = 1", "k = 2\nwidth = 4\ndepth = 1"),
        ("step", "width = 4\ndepth = 2", "width = 8\ndepth = 2"),
        ("point_fit", "width = 4\ndepth = 2", "width = 8\ndepth = 2"),
        ("exp", "width = 2\ndepth = 2", "width = 4\ndepth = 2"),
        ("root", "k = 3\nwidth = 4\ndepth = 2", "k = 3\nwidth = 8\ndepth = 2"),
    ];
    let mut problems = Vec::new();
    let mut checked = 0;
    for (builder, a, b) in levels {
        for level in [a, b] {
            let section = format!("builder = \"{builder}\"\n{level}");
            match certificate(suite, &format!("certificate {builder}"), &section) {
                Ok((t, _)) => {
                    let r = &t.rows[0];
                    let v = |c: &str| t.value(r, c).unwrap_or(f64::NAN);
                    let (measured, claimed) = (v("measured"), v("claimed"));
                    let (w, d, bw, bd) = (v("width"), v("depth"), v("budget_width"), v("budget_depth"));
                    if !(measured <= claimed) {
                        problems.push(format!("{builder} {level:?}: measured {measured:e} > claimed {claimed:e}"));
                    }
                    if !(w <= bw && d <= bd) {
                        problems.push(format!("{builder} {level:?}: size {w}x{d} over budget {bw}x{bd}"));
                    }
                    checked += 1;
                }
                Err(e) => problems.push(format!("{builder}: {e}")),
            }
        }
    }
    let square = certificate(suite, "square on [0,1] N=4 L=3", "builder = \"square\"\nwidth = 4\ndepth = 3\nlo = 0.0\nhi = 1.0");
    let square_err = match &square {
        Ok((t, _)) => t.value(&t.rows[0], "measured").unwrap_or(f64::NAN),
        Err(e) => {
            problems.push(e.clone());
            f64::NAN
        }
    };
    if !(square_err <= 0.015625) {
        problems.push(format!("square N=4 L=3 error {square_err:e} > 0.015625"));
    }
    let detail = format!("{checked} certificates within bound and budget; square N=4 L=3 error {square_err:.3e} <= 0.015625");
    suite.report(5, "constructive-network certificates", if problems.is_empty() { Ok(detail) } else { Err(problems.join("; ")) }, start);
}

fn criterion_6(suite: &mut Suite) {
    let start = Instant::now();
    let mut errs = Vec::new();
    let mut outcome = Ok(());
    for width in [4, 8] {
        let section = format!("builder = \"kde\"\nn_samples = 16\nwidth = {width}\ndepth = 2\ns = 2");
        match certificate(suite, &format!("kde network N={width}"), &section) {
            Ok((t, _)) => errs.push(t.value(&t.rows[0], "measured").unwrap_or(f64::NAN)),
            Err(e) => outcome = Err(e),
        }
    }
    let outcome = outcome.and_then(|_| {
        let ratio = errs[1] / errs[0];
        // eps = N^-2 L^-2, so eps ratio (1/4) to the power s = 2, with 50% slack.
        let allowed = (0.25f64).powi(2) * 1.5;
        let detail = format!("errors {:.3e} -> {:.3e}, ratio {ratio:.4} (want < 1 and <= {allowed})", errs[0], errs[1]);
        if errs[1] < errs[0] && ratio <= allowed {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
    suite.report(6, "kernel-network scaling", outcome, start);
}

fn criterion_7(suite: &mut Suite) {
    let start = Instant::now();
    let section = "builder = \"score\"\nn_samples = 16\nwidth = 4\ndepth = 2\ns = 2";
    let outcome = certificate(suite, "score network", section).and_then(|(_, arts)| {
        let json = &arts.files.iter().find(|f| f.0 == "network.json").expect("network file").1;
        let file: scoregen::netfile::NetworkFile = serde_json::from_slice(json).map_err(|e| e.to_string())?;
        let net = file.to_network()?;
        let field = NetworkField(&net);
        // The same schedule the builder resolved for 16 samples in one dimension.
        let n = 16usize;
        let schedule = ExperimentConfig::default().schedule.resolve(n, 1).map_err(|e| e.to_string())?;
        let root_log_n = (n as f64).ln().sqrt();
        let mut sup: f64 = 0.0;
        for t in logspace(schedule.t0, schedule.horizon, 12) {
            for y in linspace(-12.0, 12.0, 481) {
                let v = field.eval(&[y], t)[0].abs() * noise_scale(t) / root_log_n;
                if !(v <= sup) {
                    sup = v;
                }
            }
        }
        let detail = format!("sup |phi| sigma_t / sqrt(log n) = {sup:.4} (want <= 3)");
        if sup <= 3.0 {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
    suite.report(7, "score-network output bound", outcome, start);
}

fn criterion_8(suite: &mut Suite) {
    let start = Instant::now();
    let toml = format!("seeds = [0]\n{NORMAL}\n[schedule]\nt0 = 0.001\nhorizon = 8.0\n[sample]\nn_paths = 100000\nsteps = 400\nbins = 64\n");
    let outcome = suite.run("reverse sampler", &toml, Command::Sample).and_then(|arts| {
        let t = table(&arts, "sample_summary");
        let r = &t.rows[0];
        let v = |c: &str| t.value(r, c).unwrap_or(f64::NAN);
        let (tv, dm, dv) = (v("tv"), (v("mean") - v("target_mean")).abs(), (v("variance") - v("target_variance")).abs());
        let detail = format!("TV {tv:.4} (<= 0.05), |mean error| {dm:.4} (<= 0.02), |variance error| {dv:.4} (<= 0.03)");
        if tv <= 0.05 && dm <= 0.02 && dv <= 0.03 {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
    suite.report(8, "reverse sampler", outcome, start);
}

fn criterion_9(suite: &mut Suite) {
    let start = Instant::now();
    let toml = format!("seeds = [0]\n{NORMAL}\n[girsanov]\nbias = [0.05, 0.1, 0.2]\nspan = 5.0\nn_paths = 100000\nsteps = 400\nbins = 64\n");
    let outcome = suite.run("girsanov", &toml, Command::Girsanov).and_then(|arts| {
        let t = table(&arts, "girsanov");
        let mut cells = Vec::new();
        let mut ok = true;
        for r in &t.rows {
            let v = |c: &str| t.value(r, c).unwrap_or(f64::NAN);
            let (b, tv, bound) = (v("bias"), v("tv"), v("pinsker_bound"));
            ok &= tv <= bound + 0.03;
            cells.push(format!("b={b}: TV {tv:.4} vs {:.4}", bound + 0.03));
        }
        let detail = cells.join(", ");
        if ok && t.rows.len() == 3 {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
    suite.report(9, "Girsanov / Pinsker inequality", outcome, start);
}

fn criterion_10(suite: &mut Suite) {
    let start = Instant::now();
    let toml = "[target]\nkind = \"symmetric_pair\"\ncenter = 1.0\nvariance = 0.25\n[sweep_truncation]\nsigma = [0.05, 0.1, 0.2, 0.4]\ndensity = \"target\"\nlo = -6.0\nhi = 6.0\npoints = 2401\n";
    let outcome = suite.run("truncation", toml, Command::SweepTruncation).and_then(|arts| {
        let t = table(&arts, "sweep_truncation");
        let s: Vec<_> = t.rows_where("kind", "summary").collect();
        let slope = s.first().and_then(|r| t.value(r, "slope")).unwrap_or(f64::NAN);
        let detail = format!("slope {slope:.4} (want [1.8, 2.2])");
        if within(slope, 1.8, 2.2) {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
    suite.report(10, "early-stopping truncation exponent", outcome, start);
}

/// Largest relative gap between the analytic gradient and central differences.
fn gradient_gap() -> f64 {
    let target = ExperimentConfig::default().target.build().expect("default target");
    let samples = target.sample(64, 3);
    let schedule = DiffusionSchedule::new(0.05, 5.0, 1, 1.0).expect("schedule");
    let batch = DsmBatch::draw(&samples, 32, &schedule, &mut rng::stream(3, 0)).expect("batch");
    let net = TrainableNet::new(1, &[16, 16], 1e6, 3).expect("net");
    let (_, grad) = dsm_gradient(&net, &batch).expect("gradient");
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let (mut up, mut down) = (net.clone(), net.clone());
        up.params_mut()[i] += h;
        down.params_mut()[i] -= h;
        let fd = (dsm_loss(&up, &batch).unwrap() - dsm_loss(&down, &batch).unwrap()) / (2.0 * h);
        let scale = grad[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((fd - grad[i]).abs() / scale);
    }
    worst
}

fn criterion_11(suite: &mut Suite) {
    let start = Instant::now();
    let gap = gradient_gap();
    let toml = format!("{}\n{PAIR}\n[train]\nn_samples = 512\niterations = 3000\n", seeds(20));
    let outcome = suite.run("trainer", &toml, Command::Train).and_then(|arts| {
        let t = table(&arts, "training_eval");
        let rows: Vec<&Vec<String>> = t.rows.iter().collect();
        let initial = column(t, &rows, "initial_loss");
        let trained = column(t, &rows, "trained_loss");
        let mut ratios = column(t, &rows, "ratio_to_kde");
        ratios.sort_by(f64::total_cmp);
        let median = 0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2]);
        let improved = initial.iter().zip(&trained).filter(|(i, a)| a < i).count();
        let detail = format!(
            "gradient gap {gap:.2e} (<= 1e-4), trained below initial in {improved}/{} seeds, median error ratio to kernel {median:.3} (<= 5)",
            rows.len()
        );
        if gap <= 1e-4 && improved == rows.len() && median <= 5.0 {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
    suite.report(11, "trainer sanity", outcome, start);
}

fn criterion_12(suite: &mut Suite) {
    let start = Instant::now();
    let mut differing = Vec::new();
    let mut files = 0;
    for run in &suite.runs {
        match execute(&run.toml, run.command) {
            Ok(arts) => {
                let again: Vec<(String, Vec<u8>)> = arts.tables.iter().map(|t| (t.name.clone(), t.to_csv())).collect();
                files += again.len();
                if again != run.csv {
                    differing.push(run.label.clone());
                }
            }
            Err(e) => differing.push(format!("{}: {e}", run.label)),
        }
    }
    let detail = format!("{} runs, {files} CSV files repeated", suite.runs.len());
    let outcome = if differing.is_empty() { Ok(format!("{detail}, all byte-identical")) } else { Err(format!("{detail}; differing: {}", differing.join(", "))) };
    suite.report(12, "determinism", outcome, start);
}

fn main() {
    let started = Instant::now();
    let mut suite = Suite::default();
    criteria_1_2(&mut suite);
    criterion_3(&mut suite);
    criterion_4(&mut suite);
    criterion_5(&mut suite);
    criterion_6(&mut suite);
    criterion_7(&mut suite);
    criterion_8(&mut suite);
    criterion_9(&mut suite);
    criterion_10(&mut suite);
    criterion_11(&mut suite);
    criterion_12(&mut suite);
    println!(
        "acceptance: {} of 12 criteria passed in {:.1}s",
        12 - suite.failures.min(12),
        started.elapsed().as_secs_f64()
    );
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
