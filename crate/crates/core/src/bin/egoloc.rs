fn main() -> std::process::ExitCode {
    egoloc::cli::main()
}
