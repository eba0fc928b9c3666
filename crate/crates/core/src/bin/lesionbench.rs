fn main() -> std::process::ExitCode {
    lesionbench::cli::main_with_args(std::env::args_os())
}
