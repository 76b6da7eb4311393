fn main() -> std::process::ExitCode {
    uavloc::cli::main()
}
