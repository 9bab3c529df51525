fn main() -> std::process::ExitCode {
    cipher_core::cli::main()
}
