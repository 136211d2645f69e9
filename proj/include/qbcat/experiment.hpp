#pragma once

#include <string>

#include "qbcat/config.hpp"
#include "qbcat/trainer.hpp"

namespace qbcat {

// Generates a synthetic dataset directory and prints the class histogram.
void generate_dataset(const GenDataConfig& cfg);

// Runs the full (seed × sampler) grid: per seed a shared pre-trained model
// plus Pre-Train/Offline bounds, then the incremental protocol per cell.
// Emits metrics.csv, omega.csv, per-cell audit logs and optional checkpoints
// into cfg.output_dir. Worker count comes from QBCAT_WORKERS (default: all
// hardware threads). `probe` is test instrumentation and may be null.
void run_experiment(const ExperimentConfig& cfg, ProtocolProbe* probe = nullptr);

// Aggregates a results directory into report CSVs under <results>/report:
// omega_summary.csv, learning_curves.csv, class_histograms.csv.
void write_reports(const std::string& results_dir);

}  // namespace qbcat
