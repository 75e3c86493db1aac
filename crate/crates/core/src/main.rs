fn main() {
    let code = ggembed::cli::run_from_args(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
