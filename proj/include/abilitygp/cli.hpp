#pragma once

#include "abilitygp/io.hpp"

namespace abilitygp::cli {

void cmd_fit(const io::RunConfig& cfg);
void cmd_predict(const io::RunConfig& cfg);
void cmd_pool(const io::RunConfig& cfg);
void cmd_simulate(const io::RunConfig& cfg);
void cmd_replicate(const io::RunConfig& cfg);
void cmd_validate(const io::RunConfig& cfg);

}  // namespace abilitygp::cli
