use clap::Parser;
use valleyswitch::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            std::process::exit(e.exit_code());
        }
    }
}
