use clap::Parser;

fn main() {
    let cli = progfix::cli::Cli::parse();
    let code = progfix::cli::run(cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
