use mtpr_cli::cli_dispatch;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    // MTPR_THREADS caps the rayon pool (0 or unset = automatic)
    if let Ok(v) = std::env::var("MTPR_THREADS") {
        match v.parse::<usize>() {
            Ok(0) => {}
            Ok(n) => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not apply MTPR_THREADS={n}: {e}");
                }
            }
            Err(_) => log::warn!("ignoring unparsable MTPR_THREADS={v}"),
        }
    }

    std::process::exit(cli_dispatch(std::env::args_os()));
}
