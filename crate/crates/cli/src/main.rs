use clap::Parser;
use dicke_cli::args::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let (text, err) = execute(&cli);
    print!("{text}");
    if let Some(e) = err {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
