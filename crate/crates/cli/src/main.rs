fn main() {
    std::process::exit(drgame_cli::run_cli(std::env::args_os()));
}
