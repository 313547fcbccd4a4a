fn main() {
    let code = conformal_rag::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
