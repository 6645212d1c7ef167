use clap::Parser;
use pxp_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match execute(kind, &args) {
        Ok(summary) => {
            for path in &summary.outputs {
                println!("wrote {path}");
            }
            println!("manifest {}", summary.manifest.display());
        }
        Err(e) => {
            eprintln!("pxp {}: {e}", kind.name());
            std::process::exit(e.exit_code());
        }
    }
}
