fn main() -> std::process::ExitCode {
    gibbsctrl::cli::main_with(std::env::args_os())
}
