use std::process::ExitCode;

use pic_core::cli::parse_cli;
use pic_core::driver::{fit_damping_rate, run_simulation, write_csv};
use pic_core::Error;

fn run() -> pic_core::Result<()> {
    let opts = parse_cli(std::env::args_os())?;
    let rows = run_simulation(&opts.config)?;
    write_csv(&rows, &opts.config.output)?;
    if opts.fit_damping {
        let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.time, r.ex_energy)).collect();
        let fit = fit_damping_rate(&series)?;
        println!("gamma_fit={} peaks={}", fit.slope, fit.peaks);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Cli(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
