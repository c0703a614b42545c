fn main() {
    std::process::exit(trajsynth_cli::run(std::env::args_os()));
}
