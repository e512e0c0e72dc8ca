fn main() {
    std::process::exit(pufmvl_cli::main_with_args(std::env::args_os()));
}
