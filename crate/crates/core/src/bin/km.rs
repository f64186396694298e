fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let mut stdout = std::io::stdout().lock();
    let code = kinetic_manifold::cli::run(&argv, &mut stdout);
    std::process::exit(code);
}
