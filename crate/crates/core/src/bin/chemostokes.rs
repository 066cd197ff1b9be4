fn main() {
    std::process::exit(chemostokes::cli::run(std::env::args_os()));
}
