fn main() {
    std::process::exit(gradcap_cli::run(std::env::args_os()));
}
