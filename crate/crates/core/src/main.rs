fn main() -> std::process::ExitCode {
    dpcredit::cli::main()
}
