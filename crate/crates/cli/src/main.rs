fn main() {
    std::process::exit(fbpick_cli::main_with_args(std::env::args_os()));
}
