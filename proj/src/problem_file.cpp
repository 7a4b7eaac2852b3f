#include "kktsens/problem_file.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "kktsens/parser.hpp"

namespace kktsens {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + " must be an object");
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw SchemaError("unknown field '" + key + "' in " + where);
  }
}

std::string get_name(const json& obj, const std::string& where) {
  if (!obj.contains("name") || !obj["name"].is_string()) {
    throw SchemaError(where + " needs a string 'name'");
  }
  const std::string name = obj["name"].get<std::string>();
  if (name.empty()) throw SchemaError(where + " name must not be empty");
  if (is_reserved_name(name)) {
    throw SchemaError("'" + name + "' is reserved for function calls");
  }
  return name;
}

double get_number(const json& obj, const char* key, const std::string& where) {
  if (!obj[key].is_number()) {
    throw SchemaError(where + " field '" + std::string(key) +
                      "' must be a number");
  }
  return obj[key].get<double>();
}

Expr parse_rhs(ParametricProgram& prog, const json& rhs) {
  if (rhs.is_number()) {
    return Expr(&prog.graph(), prog.graph().constant(rhs.get<double>()));
  }
  if (rhs.is_string()) {
    return parse_expression(prog, rhs.get<std::string>());
  }
  throw SchemaError("constraint 'rhs' must be a number or an expression string");
}

}  // namespace

LoadedProblem load_problem(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what());
  }
  require_object(root, "problem");
  check_keys(root,
             {"schema", "variables", "parameters", "constraints", "objective",
              "loss"},
             "problem");

  if (!root.contains("schema") || !root["schema"].is_number_integer() ||
      root["schema"].get<long>() != 1) {
    throw SchemaError("unsupported or missing schema version (expected 1)");
  }
  for (const char* key : {"variables", "parameters", "constraints"}) {
    if (root.contains(key) && !root[key].is_array()) {
      throw SchemaError(std::string("'") + key + "' must be an array");
    }
  }
  if (!root.contains("objective")) {
    throw SchemaError("missing 'objective'");
  }

  LoadedProblem out;
  out.program = std::make_unique<ParametricProgram>();
  ParametricProgram& prog = *out.program;

  if (root.contains("variables")) {
    for (const json& v : root["variables"]) {
      require_object(v, "variable entry");
      check_keys(v, {"name", "lower", "upper"}, "variable entry");
      const std::string name = get_name(v, "variable entry");
      std::optional<double> lower, upper;
      if (v.contains("lower")) lower = get_number(v, "lower", "variable entry");
      if (v.contains("upper")) upper = get_number(v, "upper", "variable entry");
      prog.add_variable(name, lower, upper);
    }
  }

  if (root.contains("parameters")) {
    for (const json& p : root["parameters"]) {
      require_object(p, "parameter entry");
      check_keys(p, {"name", "value"}, "parameter entry");
      const std::string name = get_name(p, "parameter entry");
      if (!p.contains("value")) {
        throw SchemaError("parameter entry needs a 'value'");
      }
      prog.add_parameter(name, get_number(p, "value", "parameter entry"));
    }
  }

  if (root.contains("constraints")) {
    for (const json& c : root["constraints"]) {
      require_object(c, "constraint entry");
      check_keys(c, {"expr", "rel", "rhs"}, "constraint entry");
      if (!c.contains("expr") || !c["expr"].is_string()) {
        throw SchemaError("constraint entry needs a string 'expr'");
      }
      if (!c.contains("rel") || !c["rel"].is_string()) {
        throw SchemaError("constraint entry needs a string 'rel'");
      }
      if (!c.contains("rhs")) {
        throw SchemaError("constraint entry needs an 'rhs'");
      }
      const std::string rel = c["rel"].get<std::string>();
      Relation relation;
      if (rel == "==") {
        relation = Relation::Eq;
      } else if (rel == "<=") {
        relation = Relation::Le;
      } else if (rel == ">=") {
        relation = Relation::Ge;
      } else {
        throw SchemaError("constraint 'rel' must be one of ==, <=, >=");
      }
      Expr lhs = parse_expression(prog, c["expr"].get<std::string>());
      Expr rhs = parse_rhs(prog, c["rhs"]);
      prog.add_constraint(lhs, relation, rhs);
    }
  }

  {
    const json& obj = root["objective"];
    require_object(obj, "objective");
    check_keys(obj, {"sense", "expr"}, "objective");
    if (!obj.contains("sense") || !obj["sense"].is_string()) {
      throw SchemaError("objective needs a string 'sense'");
    }
    if (!obj.contains("expr") || !obj["expr"].is_string()) {
      throw SchemaError("objective needs a string 'expr'");
    }
    const std::string sense = obj["sense"].get<std::string>();
    if (sense != "min" && sense != "max") {
      throw SchemaError("objective 'sense' must be 'min' or 'max'");
    }
    prog.set_objective(sense == "min" ? Sense::Minimize : Sense::Maximize,
                       parse_expression(prog, obj["expr"].get<std::string>()));
  }

  if (root.contains("loss")) {
    const json& loss = root["loss"];
    require_object(loss, "loss");
    check_keys(loss, {"expr"}, "loss");
    if (!loss.contains("expr") || !loss["expr"].is_string()) {
      throw SchemaError("loss needs a string 'expr'");
    }
    out.loss = parse_expression(prog, loss["expr"].get<std::string>());
  }

  return out;
}

LoadedProblem load_problem_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return load_problem(buffer.str());
}

}  // namespace kktsens
