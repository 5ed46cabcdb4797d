fn main() {
    let code = vibraforge_cli::run(std::env::args_os());
    std::process::exit(code);
}
