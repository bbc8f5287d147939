fn main() {
    std::process::exit(cvbench::cli::run(std::env::args_os()));
}
