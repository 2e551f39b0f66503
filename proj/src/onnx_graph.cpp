#include "emocolor/onnx_graph.hpp"

#include <bit>
#include <climits>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <google/protobuf/io/coded_stream.h>
#include <google/protobuf/io/zero_copy_stream_impl_lite.h>

#include "emocolor/error.hpp"
#include "onnx.pb.h"

namespace emocolor::onnx {

static_assert(std::endian::native == std::endian::little,
              "raw tensor data is decoded as little-endian");

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kNotFound, "model file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::string external_bytes(const ::onnx::TensorProto& t, const std::filesystem::path& base) {
  std::string location;
  std::int64_t offset = 0;
  std::int64_t length = -1;
  for (const auto& kv : t.external_data()) {
    if (kv.key() == "location") location = kv.value();
    if (kv.key() == "offset") offset = std::stoll(kv.value());
    if (kv.key() == "length") length = std::stoll(kv.value());
  }
  if (location.empty()) fail(ErrorKind::kFormat, "external tensor without location: " + t.name());
  std::ifstream in(base / location, std::ios::binary);
  if (!in) fail(ErrorKind::kNotFound, "external data not found: " + (base / location).string());
  in.seekg(0, std::ios::end);
  const std::int64_t file_size = in.tellg();
  if (length < 0) length = file_size - offset;
  if (offset + length > file_size) fail(ErrorKind::kFormat, "external data out of range: " + t.name());
  std::string bytes(static_cast<std::size_t>(length), '\0');
  in.seekg(offset);
  in.read(bytes.data(), length);
  return bytes;
}

template <typename T>
std::vector<T> from_raw(const std::string& raw, std::size_t count, const std::string& name) {
  if (raw.size() != count * sizeof(T)) {
    fail(ErrorKind::kFormat, "tensor " + name + ": raw_data size does not match its shape");
  }
  std::vector<T> out(count);
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

Tensor convert_tensor(const ::onnx::TensorProto& t, const std::filesystem::path& base) {
  std::vector<std::int64_t> shape(t.dims().begin(), t.dims().end());
  std::size_t count = 1;
  for (auto d : shape) count *= static_cast<std::size_t>(d);

  const bool external = t.data_location() == ::onnx::TensorProto::EXTERNAL;
  const std::string raw = external ? external_bytes(t, base) : t.raw_data();
  const bool has_raw = external || t.has_raw_data();

  switch (t.data_type()) {
    case ::onnx::TensorProto::FLOAT: {
      if (has_raw) return Tensor::floats(shape, from_raw<float>(raw, count, t.name()));
      return Tensor::floats(shape, {t.float_data().begin(), t.float_data().end()});
    }
    case ::onnx::TensorProto::DOUBLE: {
      std::vector<double> d = has_raw ? from_raw<double>(raw, count, t.name())
                                      : std::vector<double>(t.double_data().begin(),
                                                            t.double_data().end());
      return Tensor::floats(shape, {d.begin(), d.end()});
    }
    case ::onnx::TensorProto::INT64: {
      if (has_raw) return Tensor::ints(shape, from_raw<std::int64_t>(raw, count, t.name()));
      return Tensor::ints(shape, {t.int64_data().begin(), t.int64_data().end()});
    }
    case ::onnx::TensorProto::INT32: {
      std::vector<std::int32_t> d = has_raw ? from_raw<std::int32_t>(raw, count, t.name())
                                            : std::vector<std::int32_t>(t.int32_data().begin(),
                                                                        t.int32_data().end());
      return Tensor::ints(shape, {d.begin(), d.end()});
    }
    default:
      fail(ErrorKind::kUnsupported,
           "tensor " + t.name() + ": unsupported element type " + std::to_string(t.data_type()));
  }
}

Attribute convert_attribute(const ::onnx::AttributeProto& a, const std::filesystem::path& base) {
  switch (a.type()) {
    case ::onnx::AttributeProto::INT: return a.i();
    case ::onnx::AttributeProto::FLOAT: return a.f();
    case ::onnx::AttributeProto::STRING: return a.s();
    case ::onnx::AttributeProto::INTS:
      return std::vector<std::int64_t>(a.ints().begin(), a.ints().end());
    case ::onnx::AttributeProto::FLOATS:
      return std::vector<float>(a.floats().begin(), a.floats().end());
    case ::onnx::AttributeProto::TENSOR: return convert_tensor(a.t(), base);
    default:
      fail(ErrorKind::kUnsupported, "attribute " + a.name() + ": unsupported type");
  }
}

void fill_tensor_proto(::onnx::TensorProto* proto, const std::string& name, const Tensor& t) {
  proto->set_name(name);
  for (auto d : t.shape) proto->add_dims(d);
  if (t.is_float()) {
    proto->set_data_type(::onnx::TensorProto::FLOAT);
    proto->set_raw_data(std::string(reinterpret_cast<const char*>(t.f.data()),
                                    t.f.size() * sizeof(float)));
  } else {
    proto->set_data_type(::onnx::TensorProto::INT64);
    proto->set_raw_data(std::string(reinterpret_cast<const char*>(t.i.data()),
                                    t.i.size() * sizeof(std::int64_t)));
  }
}

}  // namespace

Tensor Tensor::floats(std::vector<std::int64_t> shape, std::vector<float> data) {
  Tensor t;
  t.type = DType::kFloat;
  t.shape = std::move(shape);
  t.f = std::move(data);
  if (t.f.size() != t.numel()) fail(ErrorKind::kFormat, "tensor data does not match its shape");
  return t;
}

Tensor Tensor::ints(std::vector<std::int64_t> shape, std::vector<std::int64_t> data) {
  Tensor t;
  t.type = DType::kInt64;
  t.shape = std::move(shape);
  t.i = std::move(data);
  if (t.i.size() != t.numel()) fail(ErrorKind::kFormat, "tensor data does not match its shape");
  return t;
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::int64_t Node::attr_int(const std::string& key, std::int64_t fallback) const {
  auto it = attributes.find(key);
  if (it == attributes.end()) return fallback;
  if (const auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
  fail(ErrorKind::kFormat, op_type + " attribute " + key + " is not an int");
}

float Node::attr_float(const std::string& key, float fallback) const {
  auto it = attributes.find(key);
  if (it == attributes.end()) return fallback;
  if (const auto* v = std::get_if<float>(&it->second)) return *v;
  fail(ErrorKind::kFormat, op_type + " attribute " + key + " is not a float");
}

std::string Node::attr_string(const std::string& key, const std::string& fallback) const {
  auto it = attributes.find(key);
  if (it == attributes.end()) return fallback;
  if (const auto* v = std::get_if<std::string>(&it->second)) return *v;
  fail(ErrorKind::kFormat, op_type + " attribute " + key + " is not a string");
}

std::vector<std::int64_t> Node::attr_ints(const std::string& key,
                                          std::vector<std::int64_t> fallback) const {
  auto it = attributes.find(key);
  if (it == attributes.end()) return fallback;
  if (const auto* v = std::get_if<std::vector<std::int64_t>>(&it->second)) return *v;
  fail(ErrorKind::kFormat, op_type + " attribute " + key + " is not an int list");
}

Graph Graph::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.parent_path());
}

Graph Graph::parse(const std::string& bytes, const std::filesystem::path& base_dir) {
  ::onnx::ModelProto model;
  google::protobuf::io::ArrayInputStream raw(bytes.data(), static_cast<int>(bytes.size()));
  google::protobuf::io::CodedInputStream coded(&raw);
  coded.SetTotalBytesLimit(INT_MAX);
  if (!model.ParseFromCodedStream(&coded)) {
    fail(ErrorKind::kFormat, "not a valid ONNX model (protobuf parse failed)");
  }
  Graph g;
  for (const auto& op : model.opset_import()) {
    if (op.domain().empty() || op.domain() == "ai.onnx") g.opset_ = op.version();
  }
  const auto& graph = model.graph();
  for (const auto& init : graph.initializer()) {
    g.initializers_.emplace(init.name(), convert_tensor(init, base_dir));
  }
  for (const auto& in : graph.input()) {
    if (g.initializers_.contains(in.name())) continue;
    ValueInfo info{in.name(), {}};
    if (in.type().has_tensor_type()) {
      for (const auto& d : in.type().tensor_type().shape().dim()) {
        info.dims.push_back(d.has_dim_value() ? d.dim_value() : -1);
      }
    }
    g.inputs_.push_back(std::move(info));
  }
  for (const auto& out : graph.output()) g.outputs_.push_back(out.name());
  for (const auto& n : graph.node()) {
    if (!n.domain().empty() && n.domain() != "ai.onnx") {
      fail(ErrorKind::kUnsupported, "operator domain not supported: " + n.domain());
    }
    Node node;
    node.op_type = n.op_type();
    node.name = n.name();
    node.inputs.assign(n.input().begin(), n.input().end());
    node.outputs.assign(n.output().begin(), n.output().end());
    for (const auto& a : n.attribute()) {
      node.attributes.emplace(a.name(), convert_attribute(a, base_dir));
    }
    if (!detail::find_op(node.op_type)) {
      fail(ErrorKind::kUnsupported, "operator not supported: " + node.op_type);
    }
    g.nodes_.push_back(std::move(node));
  }
  return g;
}

bool Graph::has_value(const std::string& name) const {
  if (initializers_.contains(name)) return true;
  for (const auto& in : inputs_) {
    if (in.name == name) return true;
  }
  for (const auto& n : nodes_) {
    for (const auto& o : n.outputs) {
      if (o == name) return true;
    }
  }
  return false;
}

std::vector<std::string> Graph::value_names() const {
  std::vector<std::string> names;
  for (const auto& n : nodes_) {
    for (const auto& o : n.outputs) {
      if (!o.empty()) names.push_back(o);
    }
  }
  return names;
}

std::map<std::string, Tensor> Graph::run(const std::map<std::string, Tensor>& feeds,
                                         const std::vector<std::string>& fetch) const {
  for (const auto& name : fetch) {
    if (!has_value(name)) fail(ErrorKind::kNotFound, "graph has no tensor named '" + name + "'");
  }

  // Nodes are stored in topological order; walk backwards to find the ones
  // the requested tensors depend on.
  std::set<std::string> needed(fetch.begin(), fetch.end());
  std::vector<bool> active(nodes_.size(), false);
  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    const auto& n = nodes_[idx];
    bool wanted = false;
    for (const auto& o : n.outputs) wanted = wanted || needed.contains(o);
    if (!wanted) continue;
    active[idx] = true;
    for (const auto& in : n.inputs) {
      if (!in.empty()) needed.insert(in);
    }
  }

  std::map<std::string, Tensor> values;
  for (const auto& in : inputs_) {
    if (!needed.contains(in.name)) continue;
    auto it = feeds.find(in.name);
    if (it == feeds.end()) fail(ErrorKind::kInvalidArgument, "missing graph input: " + in.name);
    values.emplace(in.name, it->second);
  }

  for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
    if (!active[idx]) continue;
    const auto& n = nodes_[idx];
    std::vector<const Tensor*> args;
    for (const auto& in : n.inputs) {
      if (in.empty()) {
        args.push_back(nullptr);
        continue;
      }
      if (auto it = values.find(in); it != values.end()) {
        args.push_back(&it->second);
      } else if (auto jt = initializers_.find(in); jt != initializers_.end()) {
        args.push_back(&jt->second);
      } else {
        fail(ErrorKind::kFormat, "node " + n.op_type + " reads undefined tensor '" + in + "'");
      }
    }
    std::vector<Tensor> results;
    try {
      results = detail::find_op(n.op_type)(n, args, opset_);
    } catch (const Error& e) {
      throw Error(e.kind(), n.op_type + " (" + (n.name.empty() ? n.outputs.front() : n.name) +
                                "): " + e.what());
    }
    for (std::size_t o = 0; o < n.outputs.size() && o < results.size(); ++o) {
      if (!n.outputs[o].empty()) values.insert_or_assign(n.outputs[o], std::move(results[o]));
    }
  }

  std::map<std::string, Tensor> out;
  for (const auto& name : fetch) {
    if (auto it = values.find(name); it != values.end()) {
      out.emplace(name, it->second);
    } else if (auto jt = initializers_.find(name); jt != initializers_.end()) {
      out.emplace(name, jt->second);
    } else if (auto kt = feeds.find(name); kt != feeds.end()) {
      out.emplace(name, kt->second);
    }
  }
  return out;
}

struct GraphBuilder::Impl {
  ::onnx::ModelProto model;
};

GraphBuilder::GraphBuilder(std::string name, std::int64_t opset) : impl_(std::make_unique<Impl>()) {
  impl_->model.set_ir_version(8);
  impl_->model.set_producer_name("emocolor");
  auto* op = impl_->model.add_opset_import();
  op->set_domain("");
  op->set_version(opset);
  impl_->model.mutable_graph()->set_name(std::move(name));
}

GraphBuilder::~GraphBuilder() = default;
GraphBuilder::GraphBuilder(GraphBuilder&&) noexcept = default;
GraphBuilder& GraphBuilder::operator=(GraphBuilder&&) noexcept = default;

GraphBuilder& GraphBuilder::input(const std::string& name, const std::vector<std::int64_t>& dims) {
  auto* in = impl_->model.mutable_graph()->add_input();
  in->set_name(name);
  auto* tt = in->mutable_type()->mutable_tensor_type();
  tt->set_elem_type(::onnx::TensorProto::FLOAT);
  for (auto d : dims) tt->mutable_shape()->add_dim()->set_dim_value(d);
  return *this;
}

GraphBuilder& GraphBuilder::initializer(const std::string& name, const Tensor& value) {
  fill_tensor_proto(impl_->model.mutable_graph()->add_initializer(), name, value);
  return *this;
}

GraphBuilder& GraphBuilder::node(const std::string& op_type, const std::vector<std::string>& inputs,
                                 const std::vector<std::string>& outputs,
                                 const std::map<std::string, Attribute>& attributes) {
  auto* n = impl_->model.mutable_graph()->add_node();
  n->set_op_type(op_type);
  n->set_name(outputs.empty() ? op_type : outputs.front() + "_" + op_type);
  for (const auto& in : inputs) n->add_input(in);
  for (const auto& out : outputs) n->add_output(out);
  for (const auto& [key, value] : attributes) {
    auto* a = n->add_attribute();
    a->set_name(key);
    if (const auto* i = std::get_if<std::int64_t>(&value)) {
      a->set_type(::onnx::AttributeProto::INT);
      a->set_i(*i);
    } else if (const auto* f = std::get_if<float>(&value)) {
      a->set_type(::onnx::AttributeProto::FLOAT);
      a->set_f(*f);
    } else if (const auto* s = std::get_if<std::string>(&value)) {
      a->set_type(::onnx::AttributeProto::STRING);
      a->set_s(*s);
    } else if (const auto* is = std::get_if<std::vector<std::int64_t>>(&value)) {
      a->set_type(::onnx::AttributeProto::INTS);
      for (auto v : *is) a->add_ints(v);
    } else if (const auto* fs = std::get_if<std::vector<float>>(&value)) {
      a->set_type(::onnx::AttributeProto::FLOATS);
      for (auto v : *fs) a->add_floats(v);
    } else if (const auto* t = std::get_if<Tensor>(&value)) {
      a->set_type(::onnx::AttributeProto::TENSOR);
      fill_tensor_proto(a->mutable_t(), key, *t);
    }
  }
  return *this;
}

GraphBuilder& GraphBuilder::output(const std::string& name) {
  auto* out = impl_->model.mutable_graph()->add_output();
  out->set_name(name);
  out->mutable_type()->mutable_tensor_type()->set_elem_type(::onnx::TensorProto::FLOAT);
  return *this;
}

std::string GraphBuilder::serialize() const {
  std::string bytes;
  if (!impl_->model.SerializeToString(&bytes)) fail(ErrorKind::kIo, "model serialization failed");
  return bytes;
}

void GraphBuilder::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace emocolor::onnx
