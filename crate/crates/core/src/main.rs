use std::process::ExitCode;

use ppod::harness::{emit_report, parse_cli, run_sweep, write_event_logs};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let config = match parse_cli(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = run_sweep(&config).and_then(|report| {
        emit_report(&report, &config.out)?;
        if let Some(path) = &config.log {
            write_event_logs(&report, path, config.verbose_log)?;
        }
        for (eps, acc) in report.mean_accuracy() {
            println!("epsilon={eps} mean_accuracy={acc:.4}");
        }
        if !report.aborted.is_empty() {
            eprintln!("{} rows aborted", report.aborted.len());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
