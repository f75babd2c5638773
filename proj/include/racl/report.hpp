#pragma once

#include <string>
#include <vector>

namespace racl::report {

// Pivots long-format attack results (attack,epsilon,steps,seed,clean,adv)
// into eps_sweep.csv and iter_sweep.csv under out_dir.
void write_sweep_tables(const std::vector<std::string>& results_files,
                        const std::string& out_dir);

// One row per run directory (reads config.toml + history.csv), written to
// ablation.csv under out_dir.
void write_ablation_table(const std::vector<std::string>& run_dirs,
                          const std::string& out_dir);

}  // namespace racl::report
