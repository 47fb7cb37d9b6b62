//! `nile`: dataset generation, training, evaluation, the feedback experiment,
//! an interactive refinement loop and the Nile-to-vim-emu compiler.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use nile_core::datasetgen::{generate, GenSpec};
use nile_core::deployer::{compile, CompileError, Compilation, NetworkModel};
use nile_core::experiment::{evaluate, feedback_experiment, FeedbackMode};
use nile_core::nile::parse_nile;
use nile_core::pipeline::{Pipeline, DEFAULT_INTENT_NAME};
use nile_core::translator::{
    append_example, incorporate_feedback, read_dataset, train, write_dataset, Seq2SeqModel, TrainConfig,
    TrainingExample,
};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "nile", version, about = "Natural-language intent refinement for NFV")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic (entities, program) dataset as JSONL.
    GenDataset {
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a disjoint test set of size/5 examples here.
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Train a translator from scratch and save its weights.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 70)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 0.2)]
        val_split: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on a test set; writes a per-case CSV report.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Replay operator feedback and record accuracy at checkpoints.
    FeedbackExp {
        #[arg(long)]
        weights: PathBuf,
        /// Training database the feedback is appended to (in memory only).
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 30)]
        cases: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,30")]
        checkpoints: Vec<usize>,
        /// Feedback cases; generated from `--seed` when absent.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = 4242)]
        seed: u64,
        /// Retrain from scratch after each feedback instead of fine-tuning.
        #[arg(long)]
        retrain: bool,
        #[arg(long)]
        report: PathBuf,
    },
    /// Interactive refinement loop on stdin.
    Chat {
        #[arg(long)]
        weights: PathBuf,
        /// Feedback is appended here and the model fine-tuned on it.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        net: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_INTENT_NAME)]
        intent_name: String,
    },
    /// Compile a Nile program to vim-emu commands.
    Compile {
        #[arg(long)]
        nile: PathBuf,
        /// Network model JSON; the bundled iperf scenario when absent.
        #[arg(long)]
        net: Option<PathBuf>,
        /// Script destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
    Conflicts,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("nile_core=info")))
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Conflicts) => ExitCode::from(3),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenDataset {
            size,
            seed,
            out,
            test_out,
        } => {
            let data = generate(&GenSpec::new(size, seed)).map_err(|e| Failure::Usage(e.into()))?;
            write_dataset(&out, &data).context("writing dataset")?;
            println!("wrote {} examples to {}", data.len(), out.display());
            if let Some(path) = test_out {
                let test = generate(&GenSpec::new((size / 5).max(1), seed + 1000)).map_err(|e| Failure::Usage(e.into()))?;
                write_dataset(&path, &test).context("writing test set")?;
                println!("wrote {} test examples to {}", test.len(), path.display());
            }
        }
        Command::Train {
            dataset,
            epochs,
            batch,
            val_split,
            seed,
            lr,
            out,
        } => {
            let data = read_dataset(&dataset).context("reading dataset")?;
            let config = TrainConfig {
                epochs,
                batch_size: batch,
                validation_split: val_split,
                learning_rate: lr,
                seed,
                ..TrainConfig::default()
            };
            eprintln!("training on {} examples for {epochs} epochs", data.len());
            let (model, report) = train(&data, &config).context("training failed")?;
            println!("epoch,train_loss,val_loss,seconds");
            for e in &report.epochs {
                let val = e.val_loss.map(|v| format!("{v:.5}")).unwrap_or_default();
                println!("{},{:.5},{},{:.2}", e.epoch, e.train_loss, val, e.seconds);
            }
            println!("wall time: {:.1}s", report.total_seconds);
            model.save(&out).context("saving weights")?;
        }
        Command::Eval { weights, test, report } => {
            let model = Seq2SeqModel::load(&weights).context("loading weights")?;
            let cases = read_dataset(&test).context("reading test set")?;
            if cases.is_empty() {
                return Err(anyhow::anyhow!("{} contains no examples", test.display()).into());
            }
            check_vocabulary(&model, &cases)?;
            let result = evaluate(&model, &cases);
            result
                .write_csv(File::create(&report).context("creating report")?)
                .context("writing report")?;
            println!(
                "n={} mean R2 {:.4} +- {:.4}, exact match {:.3}",
                result.summary.n, result.summary.mean, result.summary.ci95, result.exact_rate
            );
        }
        Command::FeedbackExp {
            weights,
            dataset,
            cases,
            checkpoints,
            test,
            seed,
            retrain,
            report,
        } => {
            if checkpoints.iter().any(|&c| c > cases) {
                return Err(Failure::Usage(anyhow::anyhow!("checkpoints cannot exceed --cases {cases}")));
            }
            let mut model = Seq2SeqModel::load(&weights).context("loading weights")?;
            let mut data = read_dataset(&dataset).context("reading dataset")?;
            let pool = match test {
                Some(path) => read_dataset(&path).context("reading feedback cases")?,
                None => generate(&GenSpec::new(cases.max(1), seed)).map_err(|e| Failure::Usage(e.into()))?,
            };
            if pool.len() < cases {
                return Err(anyhow::anyhow!("only {} feedback cases available, {cases} requested", pool.len()).into());
            }
            let pool = &pool[..cases];
            check_vocabulary(&model, pool)?;
            let mode = if retrain { FeedbackMode::Retrain } else { FeedbackMode::FineTune };
            let result = feedback_experiment(&mut model, &mut data, pool, &checkpoints, mode).context("feedback replay")?;
            result
                .write_csv(File::create(&report).context("creating report")?)
                .context("writing report")?;
            for c in &result.checkpoints {
                println!("after {:>3} feedbacks: mean R2 {:.4} +- {:.4}", c.feedbacks, c.summary.mean, c.summary.ci95);
            }
        }
        Command::Chat {
            weights,
            dataset,
            net,
            intent_name,
        } => {
            let model = Seq2SeqModel::load(&weights).context("loading weights")?;
            let network = load_network(net.as_deref())?;
            let data = match &dataset {
                Some(path) if path.exists() => read_dataset(path).context("reading dataset")?,
                _ => Vec::new(),
            };
            let stdin = io::stdin();
            let mut session = Chat {
                pipeline: Pipeline {
                    intent_name,
                    ..Pipeline::default()
                },
                model,
                weights,
                dataset_path: dataset,
                dataset: data,
                network,
                input: stdin.lock(),
                out: io::stdout(),
            };
            session.run().context("chat")?;
        }
        Command::Compile { nile, net, out } => {
            let text = std::fs::read_to_string(&nile).with_context(|| format!("reading {}", nile.display()))?;
            let intent = parse_nile(&text).map_err(|e| Failure::Usage(anyhow::anyhow!("{}: {e}", nile.display())))?;
            let network = load_network(net.as_deref())?;
            let compiled = compile(&intent, &network).map_err(|e| match e {
                CompileError::Invalid(_) => Failure::Conflicts.report(&e),
                other => Failure::Runtime(other.into()),
            })?;
            eprint!("{}", compiled.report);
            match out {
                Some(path) => std::fs::write(&path, compiled.script()).context("writing script")?,
                None => print!("{}", compiled.script()),
            }
            if !compiled.deployable() {
                return Err(Failure::Conflicts);
            }
        }
    }
    Ok(())
}

impl Failure {
    fn report(self, e: &dyn std::fmt::Display) -> Self {
        eprintln!("error: {e}");
        self
    }
}

fn load_network(path: Option<&Path>) -> anyhow::Result<NetworkModel> {
    match path {
        Some(p) => NetworkModel::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(NetworkModel::iperf_fixture()),
    }
}

fn check_vocabulary(model: &Seq2SeqModel, cases: &[TrainingExample]) -> anyhow::Result<()> {
    for (i, ex) in cases.iter().enumerate() {
        if let Some(t) = ex.input.iter().chain(&ex.output).find(|t| !model.vocab.contains(t)) {
            bail!("example {i}: token `{t}` is not in the model vocabulary");
        }
    }
    Ok(())
}

struct Chat<R, W> {
    pipeline: Pipeline,
    model: Seq2SeqModel,
    weights: PathBuf,
    dataset_path: Option<PathBuf>,
    dataset: Vec<TrainingExample>,
    network: NetworkModel,
    input: R,
    out: W,
}

impl<R: BufRead, W: Write> Chat<R, W> {
    fn prompt(&mut self, text: &str) -> io::Result<Option<String>> {
        write!(self.out, "{text}")?;
        self.out.flush()?;
        let mut line = String::new();
        if self.input.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        Ok(Some(line.trim().to_string()))
    }

    /// An edited program runs until the first blank line.
    fn read_program(&mut self, first: String) -> io::Result<String> {
        let mut text = first;
        loop {
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 || line.trim().is_empty() {
                return Ok(text);
            }
            text.push('\n');
            text.push_str(line.trim_end());
        }
    }

    fn run(&mut self) -> anyhow::Result<()> {
        writeln!(self.out, "Describe an intent (\"quit\" to exit).")?;
        while let Some(utterance) = self.prompt("> ")? {
            if utterance.is_empty() {
                continue;
            }
            if utterance == "quit" || utterance == "exit" {
                break;
            }
            let candidate = match self.pipeline.refine(&utterance, &self.model) {
                Ok(c) => c,
                Err(e) => {
                    writeln!(self.out, "Sorry, I could not handle that: {e}")?;
                    continue;
                }
            };
            for w in &candidate.warnings {
                writeln!(self.out, "warning: {w}")?;
            }
            writeln!(self.out, "\n{}\n", candidate.nile_text)?;

            let accepted = loop {
                let Some(answer) = self.prompt("Is this what you want? [yes / no / edited program]: ")? else {
                    return Ok(());
                };
                match answer.to_ascii_lowercase().as_str() {
                    "y" | "yes" => break Some((Pipeline::confirmation(&candidate), candidate.intent.clone())),
                    "n" | "no" => break None,
                    _ => {
                        let text = self.read_program(answer)?;
                        match Pipeline::correction(&candidate, &text, &self.model) {
                            Ok(ex) => break Some((ex, parse_nile(&text).expect("correction parsed"))),
                            Err(e) => writeln!(self.out, "Cannot use that program: {e}")?,
                        }
                    }
                }
            };
            let Some((example, intent)) = accepted else {
                writeln!(self.out, "Discarded. Try rephrasing the request.")?;
                continue;
            };
            self.learn(example)?;

            if let Some(answer) = self.prompt("Deploy? [yes / no]: ")? {
                if matches!(answer.to_ascii_lowercase().as_str(), "y" | "yes") {
                    match compile(&intent, &self.network) {
                        Ok(c) => self.show(&c)?,
                        Err(e) => writeln!(self.out, "Cannot deploy: {e}")?,
                    }
                }
            }
        }
        Ok(())
    }

    fn learn(&mut self, example: TrainingExample) -> anyhow::Result<()> {
        let Some(path) = self.dataset_path.clone() else {
            return Ok(());
        };
        append_example(&path, &example)?;
        incorporate_feedback(&mut self.model, &mut self.dataset, example)?;
        self.model.save(&self.weights)?;
        writeln!(self.out, "Thanks, learned from it ({} examples).", self.dataset.len())?;
        Ok(())
    }

    fn show(&mut self, c: &Compilation) -> io::Result<()> {
        write!(self.out, "{}", c.report)?;
        if c.deployable() {
            let mut w = BufWriter::new(&mut self.out);
            write!(w, "{}", c.script())?;
        } else {
            writeln!(self.out, "Not deployed: resolve the errors above first.")?;
        }
        Ok(())
    }
}
