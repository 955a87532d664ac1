fn main() -> std::process::ExitCode {
    extsum::cli::main_with_args(std::env::args_os())
}
