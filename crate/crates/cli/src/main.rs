fn main() -> std::process::ExitCode {
    mpp_cli::run(std::env::args_os())
}
