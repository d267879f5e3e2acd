#pragma once
#include <string>

#include "cavlab/model.hpp"
#include "cavlab/train.hpp"

namespace cavlab {

// versioned binary container: header, then named little-endian float32 tensors
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

void save_train_log(const std::string& path, const TrainLog& log);
TrainLog load_train_log(const std::string& path);

} // namespace cavlab
