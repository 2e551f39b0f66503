#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace emocolor::onnx {

enum class DType { kFloat, kInt64 };

/// Host tensor. Only float32 and int64 are materialized; other ONNX element
/// types are converted on load.
struct Tensor {
  DType type = DType::kFloat;
  std::vector<std::int64_t> shape;
  std::vector<float> f;
  std::vector<std::int64_t> i;

  static Tensor floats(std::vector<std::int64_t> shape, std::vector<float> data);
  static Tensor ints(std::vector<std::int64_t> shape, std::vector<std::int64_t> data);

  std::size_t numel() const;
  bool is_float() const { return type == DType::kFloat; }
};

using Attribute = std::variant<std::int64_t, float, std::string, std::vector<std::int64_t>,
                               std::vector<float>, Tensor>;

struct Node {
  std::string op_type;
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, Attribute> attributes;

  std::int64_t attr_int(const std::string& key, std::int64_t fallback) const;
  float attr_float(const std::string& key, float fallback) const;
  std::string attr_string(const std::string& key, const std::string& fallback) const;
  std::vector<std::int64_t> attr_ints(const std::string& key,
                                      std::vector<std::int64_t> fallback = {}) const;
  bool has_attr(const std::string& key) const { return attributes.contains(key); }
};

struct ValueInfo {
  std::string name;
  std::vector<std::int64_t> dims;  // -1 for symbolic/unknown dimensions
};

/// An immutable, loaded ONNX graph with a small CPU interpreter.
///
/// Any value produced by a node (not just declared graph outputs) can be
/// fetched by name, which is how intermediate-layer activations are read.
/// run() is const and keeps no state between calls, so one Graph may be used
/// from several threads at once.
class Graph {
 public:
  static Graph load(const std::filesystem::path& path);
  static Graph parse(const std::string& bytes, const std::filesystem::path& base_dir = {});

  /// Graph inputs that are not backed by an initializer.
  const std::vector<ValueInfo>& inputs() const { return inputs_; }
  const std::vector<std::string>& outputs() const { return outputs_; }
  bool has_value(const std::string& name) const;
  std::vector<std::string> value_names() const;
  std::int64_t opset() const { return opset_; }

  std::map<std::string, Tensor> run(const std::map<std::string, Tensor>& feeds,
                                    const std::vector<std::string>& fetch) const;

 private:
  std::vector<Node> nodes_;
  std::map<std::string, Tensor> initializers_;
  std::vector<ValueInfo> inputs_;
  std::vector<std::string> outputs_;
  std::int64_t opset_ = 13;
};

/// Programmatic model writer, used for test fixtures and the bundled
/// synthetic backbones.
class GraphBuilder {
 public:
  explicit GraphBuilder(std::string name, std::int64_t opset = 13);
  ~GraphBuilder();
  GraphBuilder(GraphBuilder&&) noexcept;
  GraphBuilder& operator=(GraphBuilder&&) noexcept;

  GraphBuilder& input(const std::string& name, const std::vector<std::int64_t>& dims);
  GraphBuilder& initializer(const std::string& name, const Tensor& value);
  GraphBuilder& node(const std::string& op_type, const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs,
                     const std::map<std::string, Attribute>& attributes = {});
  GraphBuilder& output(const std::string& name);

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

namespace detail {
using OpFn = std::vector<Tensor> (*)(const Node&, const std::vector<const Tensor*>&,
                                     std::int64_t opset);
/// Returns nullptr for unsupported operators.
OpFn find_op(const std::string& op_type);
std::vector<std::string> supported_ops();
}  // namespace detail

}  // namespace emocolor::onnx
