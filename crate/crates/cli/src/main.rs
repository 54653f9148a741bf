use clap::Parser;
use randcurv_cli::{run, Cli};

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let record = run(&cli)?;
    for path in &record.artifacts {
        println!("{}", path.display());
    }
    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
