#include "mkt/checkpoint.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mkt/errors.hpp"
#include "mkt/hash.hpp"

namespace mkt::tg {
namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_dim(const std::string& s, std::size_t line) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno != 0) throw ParseError("bad dimension '" + s + "'", line);
  return static_cast<std::size_t>(v);
}

void append_record(std::string& out, const std::string& name, const Tensor& t) {
  out += name;
  out += '\t';
  out += std::to_string(t.rows());
  out += '\t';
  out += std::to_string(t.cols());
  out += '\t';
  char buf[32];
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out += ',';
    const int n = std::snprintf(buf, sizeof buf, "%.17g", t[i]);
    out.append(buf, static_cast<std::size_t>(n));
  }
  out += '\n';
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::string serialize(const Checkpoint& ckpt) {
  std::string out;
  for (const auto& [key, fields] : ckpt.meta) {
    out += '#';
    out += key;
    for (const auto& f : fields) {
      out += '\t';
      out += f;
    }
    out += '\n';
  }
  for (const auto& [name, t] : ckpt.tensors) append_record(out, name, t);
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  Checkpoint ckpt;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto fields = split(line.substr(1), '\t');
      std::string key = fields.front();
      fields.erase(fields.begin());
      ckpt.meta[key] = std::move(fields);
      continue;
    }
    const auto fields = split(line, '\t');
    if (fields.size() != 4) throw ParseError("expected 4 tab-separated fields", lineno);
    const std::size_t rows = parse_dim(fields[1], lineno);
    const std::size_t cols = parse_dim(fields[2], lineno);
    std::vector<double> values;
    values.reserve(rows * cols);
    if (rows * cols > 0) {
      for (const auto& tok : split(fields[3], ',')) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (tok.empty() || *end != '\0') throw ParseError("bad value '" + tok + "' in " + fields[0], lineno);
        values.push_back(v);
      }
    }
    if (values.size() != rows * cols)
      throw ParseError(fields[0] + ": expected " + std::to_string(rows * cols) + " values, found " +
                           std::to_string(values.size()),
                       lineno);
    ckpt.tensors.emplace_back(fields[0], Tensor(rows, cols, std::move(values)));
  }
  return ckpt;
}

Checkpoint snapshot(const ParameterSet& params) {
  Checkpoint ckpt;
  for (const Parameter* p : params.all()) ckpt.tensors.emplace_back(p->name, p->value);
  return ckpt;
}

void restore(ParameterSet& params, const Checkpoint& ckpt) {
  std::vector<std::string> problems;
  std::size_t matched = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    Parameter* p = params.find(name);
    if (!p) {
      problems.push_back("unexpected '" + name + "'");
    } else if (!p->value.same_shape(t)) {
      problems.push_back("'" + name + "' has shape " + t.shape_str() + ", model expects " + p->value.shape_str());
    } else {
      ++matched;
    }
  }
  if (matched != params.size()) {
    for (const Parameter* p : params.all())
      if (!ckpt.find(p->name)) problems.push_back("missing '" + p->name + "'");
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match the model:";
    for (const auto& s : problems) msg += "\n  " + s;
    throw ValidationError(msg);
  }
  for (const auto& [name, t] : ckpt.tensors) {
    Parameter& p = params.at(name);
    p.value = t;
    p.zero_grad();
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DependencyError("cannot write checkpoint '" + path.string() + "'");
  out << serialize(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DependencyError("checkpoint '" + path.string() + "' not found");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

std::string content_hash(const ParameterSet& params) { return sha256_hex(serialize(snapshot(params))); }

}  // namespace mkt::tg
