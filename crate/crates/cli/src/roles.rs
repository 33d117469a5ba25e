use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::Path;
use std::time::{Duration, Instant};

use ppls_core::fixedpoint::ScaledInt;
use ppls_core::oracle::{
    gd_fixedpoint, gd_fixedpoint_with, rationals_to_f64, relative_error, solve_normal_equations,
    write_trajectory_header, write_trajectory_row, Dataset,
};
use ppls_core::protocol::{
    audit_exposure, run_alice, run_bob, run_local, PartyConfig, PartyOptions, PartySetup, SessionParams,
};
use ppls_core::transport::{Channel, TcpChannel};
use ppls_core::{Error, Result};

use crate::bench;
use crate::config::{Args, Role};
use crate::report::Report;

pub fn run(args: &Args) -> Result<()> {
    match args.role {
        Role::Local => local(args),
        Role::Oracle => oracle(args),
        Role::Bench => bench::run(args),
        Role::Bob | Role::Alice => party(args),
    }
}

pub fn load(path: &Path) -> Result<Dataset> {
    Dataset::from_csv_path(path).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

pub fn split(args: &Args, data: &Dataset) -> Result<(Dataset, Dataset)> {
    data.split_at(args.split.unwrap_or(data.m().div_ceil(2)))
}

pub fn setups(args: &Args, config: &PartyConfig, data: &Dataset) -> Result<(PartySetup, PartySetup)> {
    let (bob, alice) = split(args, data)?;
    let setup = |data, bob| PartySetup {
        config: config.clone(),
        data,
        options: PartyOptions { seed: args.party_seed(bob), ..Default::default() },
    };
    Ok((setup(bob, true), setup(alice, false)))
}

fn write_theta(path: Option<&Path>, theta: &[ScaledInt]) -> Result<()> {
    let text: String = theta.iter().map(|t| format!("{t}\n")).collect();
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn header(report: &mut Report, args: &Args, role: &str, params: &SessionParams) {
    report.put("role", role);
    report.put("n", params.n);
    report.put("m1", params.m1);
    report.put("m2", params.m2);
    report.put("iterations", params.iterations);
    report.put("alpha", &args.alpha);
    report.put("s1", params.scale_plan.s1());
    report.put("s2", params.scale_plan.s2());
    report.put("kappa", params.kappa);
    report.put("keybits", params.keybits);
}

fn theta_line(theta: &[ScaledInt]) -> String {
    theta.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn local(args: &Args) -> Result<()> {
    let data = load(&args.data)?;
    let config = args.party_config()?;
    let (bob, alice) = setups(args, &config, &data)?;
    let run = run_local(bob, alice, Duration::from_secs(args.timeout))?;
    if run.bob.theta != run.alice.theta {
        return Err(Error::InvalidInput("parties revealed different θ".into()));
    }
    let mut report = Report::new();
    header(&mut report, args, "local", &run.bob.params);
    report.put("elapsed_ms", run.elapsed.as_millis());
    report.meter(&run.meter, run.bob.params.iterations);
    report.outcome("bob", &run.bob);
    report.outcome("alice", &run.alice);
    report.audit(&run.audit);
    report.put("theta", theta_line(&run.bob.theta));
    report.write(args.report.as_deref())?;
    write_theta(args.out.as_deref(), &run.bob.theta)
}

fn party(args: &Args) -> Result<()> {
    let data = load(&args.data)?;
    let config = args.party_config()?;
    let timeout = Duration::from_secs(args.timeout);
    let mut channel = match (&args.listen, &args.connect) {
        (Some(addr), None) => TcpChannel::accept(&TcpListener::bind(addr)?, timeout)?,
        (None, Some(addr)) => TcpChannel::connect(addr.as_str(), timeout)?,
        _ => return Err(Error::InvalidParameter("bob and alice need exactly one of --listen or --connect".into())),
    };
    let is_bob = args.role == Role::Bob;
    let options = PartyOptions { seed: args.party_seed(is_bob), ..Default::default() };
    let start = Instant::now();
    let outcome = if is_bob {
        run_bob(config, data, options, &mut channel)
    } else {
        run_alice(config, data, options, &mut channel)
    };
    channel.shutdown();
    let outcome = outcome?;
    let elapsed = start.elapsed();
    let role = if is_bob { "bob" } else { "alice" };
    let mut report = Report::new();
    header(&mut report, args, role, &outcome.params);
    report.put("elapsed_ms", elapsed.as_millis());
    report.meter(channel.meter(), outcome.params.iterations);
    report.outcome(role, &outcome);
    report.audit(&audit_exposure(&outcome.transcript));
    report.put("theta", theta_line(&outcome.theta));
    report.write(args.report.as_deref())?;
    write_theta(args.out.as_deref(), &outcome.theta)
}

pub fn params_for(args: &Args, config: &PartyConfig, data: &Dataset) -> Result<SessionParams> {
    let (bob, alice) = split(args, data)?;
    SessionParams::negotiate(&config.proposal(bob.n(), bob.m())?, &config.proposal(alice.n(), alice.m())?)
}

fn oracle(args: &Args) -> Result<()> {
    let data = load(&args.data)?;
    let config = args.party_config()?;
    let params = params_for(args, &config, &data)?;
    data.check_bounds(&params.bounds)?;
    let start = Instant::now();

    let exact = match (&args.trajectory, &args.sweep) {
        (None, None) => None,
        _ => Some(rationals_to_f64(&solve_normal_equations(&data)?)),
    };
    let theta = match (&args.trajectory, &exact) {
        (Some(path), Some(exact)) => {
            let mut out = BufWriter::new(File::create(path)?);
            write_trajectory_header(&mut out, data.n())?;
            let scale = params.scale_plan.s2();
            let mut io_result = Ok(());
            let theta = gd_fixedpoint_with(&data, &params, |it, t| {
                if io_result.is_ok() {
                    let decoded: Vec<f64> = t.iter().map(|v| ScaledInt::new(v.clone(), scale).decode()).collect();
                    io_result = write_trajectory_row(&mut out, it, &decoded, exact);
                }
            })?;
            io_result?;
            out.flush()?;
            theta
        }
        _ => gd_fixedpoint(&data, &params)?,
    };
    let elapsed = start.elapsed();

    let mut report = Report::new();
    header(&mut report, args, "oracle", &params);
    report.put("elapsed_ms", elapsed.as_millis());
    if let Some(exact) = &exact {
        let decoded: Vec<f64> = theta.iter().map(ScaledInt::decode).collect();
        report.put("relative_error", format!("{:e}", relative_error(&decoded, exact)));
    }
    report.put("theta", theta_line(&theta));

    if let (Some(scales), Some(exact)) = (args.sweep_scales()?, &exact) {
        let mut out = io::stdout().lock();
        writeln!(out, "scale,relative_error")?;
        for s in scales {
            let p = params_for(args, &args.party_config_at(s, s)?, &data)?;
            let t: Vec<f64> = gd_fixedpoint(&data, &p)?.iter().map(ScaledInt::decode).collect();
            let err = relative_error(&t, exact);
            writeln!(out, "{s},{err:e}")?;
            report.put(format!("sweep.s{s}"), format!("{err:e}"));
        }
        report.write(args.report.as_deref())?;
        if let Some(path) = &args.out {
            write_theta(Some(path), &theta)?;
        }
        return Ok(());
    }
    report.write(args.report.as_deref())?;
    write_theta(args.out.as_deref(), &theta)
}
