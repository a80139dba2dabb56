fn main() -> std::process::ExitCode {
    mobisim::cli::main()
}
