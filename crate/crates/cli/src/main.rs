fn main() -> std::process::ExitCode {
    evrec_cli::cli::main()
}
