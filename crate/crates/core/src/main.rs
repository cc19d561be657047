fn main() {
    let code = adsac::harness::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
