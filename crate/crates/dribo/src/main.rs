use clap::Parser;

fn main() {
    let cli = dribo::harness::cli::Cli::parse();
    match dribo::harness::cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
