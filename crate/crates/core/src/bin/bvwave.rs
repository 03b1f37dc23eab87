use clap::Parser;

fn main() {
    let cli = bvwave::cli::Cli::parse();
    let code = match cli.resolve() {
        Ok(cfg) => bvwave::cli::run(&cfg),
        Err(e) => {
            eprintln!("error: {e}");
            bvwave::cli::exit_code(&e)
        }
    };
    std::process::exit(code);
}
