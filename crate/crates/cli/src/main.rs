fn main() {
    std::process::exit(sworgrad_cli::run(std::env::args_os()));
}
