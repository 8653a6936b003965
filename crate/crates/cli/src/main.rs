use clap::{Args, Parser, Subcommand};
use navfield_cli::{
    cmd_classify, cmd_enumerate, cmd_field, cmd_plan, parse_roots, planner_config, CliError,
    Overrides, RunConfig,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "navfield", version, about = "Harmonic potential-field planner for squircle worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy, Default)]
struct TuningArgs {
    /// RK4 integration step length.
    #[arg(long)]
    step: Option<f64>,
    /// Goal convergence radius.
    #[arg(long)]
    goal_tol: Option<f64>,
    /// Integration step budget per path.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Gradient-descent step size for the weight optimizer.
    #[arg(long)]
    step_size: Option<f64>,
    /// Feasibility margin for the weight optimizer.
    #[arg(long)]
    margin: Option<f64>,
    /// Finite-difference step for signature Jacobians.
    #[arg(long)]
    fd_step: Option<f64>,
    /// Jacobian-norm termination threshold.
    #[arg(long)]
    grad_threshold: Option<f64>,
    /// Optimizer iteration budget per class.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Switch sharpness of the diffeomorphism stages.
    #[arg(long)]
    switch_sharpness: Option<f64>,
}

impl TuningArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            step: self.step,
            goal_tol: self.goal_tol,
            max_steps: self.max_steps,
            step_size: self.step_size,
            margin: self.margin,
            fd_step: self.fd_step,
            grad_threshold: self.grad_threshold,
            max_iters: self.max_iters,
            switch_sharpness: self.switch_sharpness,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate every realizable homotopy class of the workspace.
    Enumerate {
        /// Workspace JSON file.
        workspace: PathBuf,
        /// Output directory for solutions.json, report.json and path CSVs.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Plan one class, selected by signature or by region preferences.
    Plan {
        workspace: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Target sign vector, e.g. "1,-1,1".
        #[arg(long)]
        signature: Option<String>,
        /// Filter enumerated classes by the workspace's region preferences.
        #[arg(long)]
        regions: bool,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Classify an external forest-frame path CSV (t,x,y).
    Classify {
        workspace: PathBuf,
        /// Path CSV to classify.
        path: PathBuf,
        /// Per-tree root indices, e.g. "0,2,1" (defaults to the file order).
        #[arg(long)]
        roots: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        switch_sharpness: f64,
    },
    /// Sample the forest potential on a grid and write x,y,value CSV.
    Field {
        workspace: PathBuf,
        /// Flat weight vector: goal weight then one weight per tree.
        #[arg(long, value_delimiter = ',', required = true)]
        weights: Vec<f64>,
        /// Grid resolution (cells per axis).
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, default_value = "field.csv")]
        out: PathBuf,
        #[arg(long)]
        roots: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        switch_sharpness: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Enumerate {
            workspace,
            out,
            tuning,
        } => {
            let cfg = RunConfig::new(planner_config(&tuning.overrides()), 0);
            cmd_enumerate(&workspace, &out, &cfg)
        }
        Command::Plan {
            workspace,
            out,
            signature,
            regions,
            tuning,
        } => {
            let cfg = RunConfig::new(planner_config(&tuning.overrides()), 0);
            cmd_plan(&workspace, &out, &cfg, signature.as_deref(), regions)
        }
        Command::Classify {
            workspace,
            path,
            roots,
            switch_sharpness,
        } => {
            let roots = roots.as_deref().map(parse_roots).transpose()?;
            let text = cmd_classify(&workspace, &path, roots.as_deref(), switch_sharpness)?;
            print!("{text}");
            Ok(())
        }
        Command::Field {
            workspace,
            weights,
            resolution,
            out,
            roots,
            switch_sharpness,
        } => {
            let roots = roots.as_deref().map(parse_roots).transpose()?;
            cmd_field(
                &workspace,
                &weights,
                (resolution, resolution),
                &out,
                roots.as_deref(),
                switch_sharpness,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
