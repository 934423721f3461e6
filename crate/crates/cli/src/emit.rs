//! Output files: CSV, summary, and two-column plot data.
//!
//! Every float is written in scientific notation with 17 significant
//! digits, so files round-trip exactly and identical runs produce
//! byte-identical output. Field separator `,`, decimal point `.`, line
//! ending `\n`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nlobs_core::gainbounds::SynthReport;
use nlobs_core::harness::{ClosedLoopRun, OutputCompareReport, RowatScenario, RunSummary};
use nlobs_core::excitation::{UpeReport, WnpeReport};
use nlobs_core::ode::Trajectory;
use nlobs_core::plant::BifurcationRow;

/// 17 significant digits, full round-trip precision.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, contents)
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    out.push('t');
    for label in traj.labels() {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for i in 0..traj.len() {
        out.push_str(&fmt_f64(traj.time(i)));
        for v in traj.sample(i) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Closed-loop run schema:
/// `t,V,q,y,y_hat,x1_hat,x2_hat,theta_hat_1..m,lambda_hat[,_j],pi_value,gate_value,s_1..s_2p`.
pub fn run_csv(run: &ClosedLoopRun) -> String {
    let (m, p) = (run.m, run.p);
    let mut out = String::new();
    out.push_str("t,V,q,y,y_hat,x1_hat,x2_hat");
    for j in 1..=m {
        let _ = write!(out, ",theta_hat_{j}");
    }
    if p == 1 {
        out.push_str(",lambda_hat");
    } else {
        for j in 1..=p {
            let _ = write!(out, ",lambda_hat_{j}");
        }
    }
    out.push_str(",pi_value,gate_value");
    for j in 1..=2 * p {
        let _ = write!(out, ",s_{j}");
    }
    out.push('\n');
    for i in 0..run.len() {
        let st = run.observer_state(i);
        let xh = run.x_hat(i);
        let cells: Vec<f64> = [run.time(i), run.v(i), run.q(i), run.v(i), run.y_hat(i)]
            .into_iter()
            .chain(xh.iter().copied())
            .chain(st.theta.iter().copied())
            .chain(run.lambda_hat(i).iter().copied())
            .chain([run.pi(i), run.gate(i)])
            .chain(st.s.iter().copied())
            .collect();
        let line: Vec<String> = cells.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// `key = value` summary lines, fixed order, namespaced keys.
pub fn summary_text(sc: &RowatScenario, summary: &RunSummary, constraints_enabled: bool) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("run.steps", summary.steps.to_string());
    kv("run.recorded", summary.recorded.to_string());
    kv("run.h", fmt_f64(sc.integration.h));
    kv("run.t_final", fmt_f64(summary.t_final));
    kv("run.record_every", sc.integration.record_every.to_string());
    kv(
        "run.constraints_enabled",
        constraints_enabled.to_string(),
    );
    for (j, v) in summary.theta_final.iter().enumerate() {
        kv(&format!("estimate.theta_{}", j + 1), fmt_f64(*v));
    }
    kv("estimate.lambda", fmt_f64(summary.lambda_final[0]));
    for (j, v) in summary.theta_tail_mean.iter().enumerate() {
        kv(&format!("estimate.theta_tail_{}", j + 1), fmt_f64(*v));
    }
    kv("estimate.lambda_tail", fmt_f64(summary.lambda_tail_mean[0]));
    match summary.lambda_capture_time {
        Some(t) => kv("estimate.lambda_capture_time", fmt_f64(t)),
        None => kv("estimate.lambda_capture_time", "none".into()),
    }
    match &summary.recovered {
        Some(p) => {
            kv("physical.in_chart", "true".into());
            kv("physical.tau_m", fmt_f64(p.tau_m));
            kv("physical.tau_s", fmt_f64(p.tau_s));
            kv("physical.sigma_s", fmt_f64(p.sigma_s));
            kv("physical.sigma_f", fmt_f64(p.sigma_f));
            kv("physical.a_f", fmt_f64(p.a_f));
        }
        None => kv("physical.in_chart", "false".into()),
    }
    kv("error.y_tail_sup", fmt_f64(summary.y_err_tail_sup));
    kv("error.state_tail_sup", fmt_f64(summary.state_err_tail_sup));
    kv("pi.tail_max", fmt_f64(summary.pi_tail_max));
    kv("gate.tail_max", fmt_f64(summary.gate_tail_max));
    kv("gate.zero_fraction", fmt_f64(summary.gate_zero_fraction));
    out
}

/// Two-column `t,value` data file.
pub fn dat_text(t0: f64, h: f64, start: usize, values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        let t = t0 + h * (start + i) as f64;
        let _ = writeln!(out, "{},{}", fmt_f64(t), fmt_f64(*v));
    }
    out
}

/// All files of one closed-loop run: `<stem>.csv`, `<stem>.summary`, and
/// the plot series (parameter estimates against time, the lambda
/// estimate, and the true/estimated physical states over the final 5%).
pub fn emit_run(
    dir: &Path,
    stem: &str,
    sc: &RowatScenario,
    run: &ClosedLoopRun,
    summary: &RunSummary,
) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut push = |path: PathBuf, contents: String| -> io::Result<PathBuf> {
        write_file(&path, &contents)?;
        Ok(path)
    };

    written.push(push(dir.join(format!("{stem}.csv")), run_csv(run))?);
    written.push(push(
        dir.join(format!("{stem}.summary")),
        summary_text(sc, summary, sc.constraints.enabled),
    )?);

    // recovered physical parameter series (inverse map per sample where
    // defined; tail means are used in the summary instead)
    let count = run.len();
    let mut series: [Vec<f64>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let mut lambda_series = Vec::with_capacity(count);
    for i in 0..count {
        let st = run.observer_state(i);
        let c = nlobs_core::plant::CanonicalParams {
            theta: [st.theta[0], st.theta[1], st.theta[2], st.theta[3]],
            lambda: run.lambda_hat(i)[0],
        };
        match nlobs_core::plant::from_canonical(&c) {
            Ok(p) => {
                series[0].push(p.tau_m);
                series[1].push(p.tau_s);
                series[2].push(p.sigma_s);
                series[3].push(p.a_f);
            }
            Err(_) => {
                for s in &mut series {
                    s.push(f64::NAN);
                }
            }
        }
        lambda_series.push(run.lambda_hat(i)[0]);
    }
    for (name, values) in ["tau_m", "tau_s", "sigma_s", "a_f"].iter().zip(&series) {
        written.push(push(
            dir.join(format!("{stem}.{name}.dat")),
            dat_text(run.t0, run.h, 0, values),
        )?);
    }
    written.push(push(
        dir.join(format!("{stem}.lambda.dat")),
        dat_text(run.t0, run.h, 0, &lambda_series),
    )?);

    // final-state comparison over the last 5% of the horizon, physical
    // coordinates; estimates mapped back through the tail-mean parameters
    let tail = run.tail_start(0.05);
    let mut v_true = Vec::new();
    let mut q_true = Vec::new();
    let mut v_est = Vec::new();
    let mut q_est = Vec::new();
    let back = summary.recovered.as_ref();
    for i in tail..count {
        v_true.push(run.v(i));
        q_true.push(run.q(i));
        let xh = run.x_hat(i);
        match back {
            Some(p) => {
                let vq = nlobs_core::plant::state_from_canonical(p, [xh[0], xh[1]]);
                v_est.push(vq[0]);
                q_est.push(vq[1]);
            }
            None => {
                v_est.push(f64::NAN);
                q_est.push(f64::NAN);
            }
        }
    }
    for (name, values) in [
        ("V_true", &v_true),
        ("q_true", &q_true),
        ("V_hat", &v_est),
        ("q_hat", &q_est),
    ] {
        written.push(push(
            dir.join(format!("{stem}.{name}.dat")),
            dat_text(run.t0, run.h, tail, values),
        )?);
    }
    Ok(written)
}

/// Bifurcation CSV: `sigma_s,n_equilibria,V_e_1..3,class_1..3` with empty
/// cells for absent branches.
pub fn bifurcation_csv(rows: &[BifurcationRow]) -> String {
    let mut out = String::from(
        "sigma_s,n_equilibria,V_e_1,V_e_2,V_e_3,class_1,class_2,class_3\n",
    );
    for row in rows {
        let mut cells = vec![
            fmt_f64(row.sigma_s),
            row.equilibria.len().to_string(),
        ];
        for k in 0..3 {
            cells.push(match row.equilibria.get(k) {
                Some(e) => fmt_f64(e.v),
                None => String::new(),
            });
        }
        for k in 0..3 {
            cells.push(match row.equilibria.get(k) {
                Some(e) => e.class.code().to_string(),
                None => String::new(),
            });
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn upe_csv(rep: &UpeReport) -> String {
    let mut out = String::from("lambda,mu,pass\n");
    for row in &rep.rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(row.lambda[0]),
            fmt_f64(row.mu),
            row.mu > rep.threshold
        );
    }
    out
}

pub fn wnpe_csv(rep: &WnpeReport) -> String {
    let mut out = String::from(
        "lambda,theta_1,theta_2,theta_3,theta_4,distance,worst_sup,envelope,residual,indistinguishable\n",
    );
    for row in &rep.rows {
        let mut cells = vec![fmt_f64(row.lambda[0])];
        for v in &row.theta {
            cells.push(fmt_f64(*v));
        }
        cells.push(fmt_f64(row.distance));
        cells.push(fmt_f64(row.worst_sup));
        cells.push(fmt_f64(row.envelope));
        cells.push(fmt_f64(row.residual));
        cells.push(row.indistinguishable.to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Crossing table of the synthetic interconnection run. A crossing
/// passes when its interval clears `tau*` within one step of timing
/// resolution.
pub fn crossings_csv(rep: &SynthReport) -> String {
    let mut out = String::from("i,t_i,T_i,tau_star,pass\n");
    for c in &rep.crossings {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.index,
            fmt_f64(c.time),
            fmt_f64(c.interval),
            fmt_f64(rep.tau_star),
            c.interval >= rep.tau_star - rep.step
        );
    }
    out
}

pub fn output_compare_files(
    dir: &Path,
    stem: &str,
    rep: &OutputCompareReport,
) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, series) in [
        ("V_setA_ic1", &rep.v_a_near),
        ("V_setC_ic1", &rep.v_c_near),
        ("V_setA_ic2", &rep.v_a_far),
        ("V_setC_ic2", &rep.v_c_far),
    ] {
        let path = dir.join(format!("{stem}.{name}.dat"));
        write_file(&path, &dat_text(0.0, rep.rec_h, 0, series))?;
        written.push(path);
    }
    Ok(written)
}
