fn main() {
    std::process::exit(capmdp::cli::run(std::env::args_os()));
}
