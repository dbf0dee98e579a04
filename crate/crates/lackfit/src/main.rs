use clap::Parser;

fn main() {
    let cli = lackfit::cli::Cli::parse();
    match lackfit::cli::run(cli) {
        Ok(summary) => print!("{summary}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
