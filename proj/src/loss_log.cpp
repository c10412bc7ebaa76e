#include <json.hpp>

#include "floragan/losses.hpp"

namespace floragan {

LossLog::LossLog(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw Error("cannot open loss log " + path);
}

void LossLog::record(long iteration, int epoch, std::string_view name, double value) {
  if (!out_.is_open()) return;
  nlohmann::json j;
  j["iteration"] = iteration;
  j["epoch"] = epoch;
  j["name"] = name;
  j["value"] = value;
  out_ << j.dump() << '\n';
}

std::vector<LossRecord> read_loss_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read loss log " + path);
  std::vector<LossRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("iteration").get<long>(), j.at("epoch").get<int>(), j.at("name").get<std::string>(),
                   j.at("value").get<double>()});
  }
  return out;
}

}  // namespace floragan
