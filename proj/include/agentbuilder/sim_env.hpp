#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "agentbuilder/error.hpp"
#include "agentbuilder/workflow.hpp"

namespace agentbuilder {

enum class ElementRole { Button, Link, Text, Input, Select, Image };

std::string_view to_string(ElementRole role);

namespace effect {
struct Navigate {
  std::string url;
  friend bool operator==(const Navigate&, const Navigate&) = default;
};
struct AddToCart {
  std::string item;
  friend bool operator==(const AddToCart&, const AddToCart&) = default;
};
struct Reveal {
  std::string element;
  friend bool operator==(const Reveal&, const Reveal&) = default;
};
/// Marks an input as storing typed text.
struct SetValue {
  friend bool operator==(const SetValue&, const SetValue&) = default;
};
/// Places the order. Needs a value in `requires_value` (the password input) first.
struct Purchase {
  std::string requires_value;
  friend bool operator==(const Purchase&, const Purchase&) = default;
};
}  // namespace effect

using Effect = std::variant<effect::Navigate, effect::AddToCart, effect::Reveal, effect::SetValue, effect::Purchase>;

std::string_view effect_name(const Effect& e);

struct SimElement {
  std::string id;
  ElementRole role = ElementRole::Text;
  std::string label;
  int row = 0;
  std::vector<Effect> effects;
  bool hidden = false;  // present only after a Reveal effect
  bool secret = false;  // typed values are masked in observations

  friend bool operator==(const SimElement&, const SimElement&) = default;
};

struct SimPage {
  std::string url;
  std::string title;
  int height = 0;
  std::vector<SimElement> elements;

  const SimElement* find(std::string_view id) const;
  friend bool operator==(const SimPage&, const SimPage&) = default;
};

struct CartItem {
  std::string item;
  std::vector<std::string> options;
  int quantity = 1;
  friend bool operator==(const CartItem&, const CartItem&) = default;
};

struct SimSite {
  std::string fixture_id;
  std::map<std::string, SimPage> pages;
  std::string current_url;
  std::vector<CartItem> cart;
  std::vector<std::vector<CartItem>> orders;
  std::map<std::string, std::string> form_values;
  std::set<std::string> revealed;
  std::uint64_t version = 0;

  const SimPage& current_page() const { return pages.at(current_url); }
  bool is_present(const SimElement& e) const { return !e.hidden || revealed.count(e.id) > 0; }
  friend bool operator==(const SimSite&, const SimSite&) = default;
};

struct Viewport {
  int offset = 0;
  int height = 20;
  friend bool operator==(const Viewport&, const Viewport&) = default;
};

struct Observation {
  std::string url;
  std::string title;
  std::string accessibility_tree;
  std::string snapshot;
  std::string cart_summary;
  Viewport viewport;
  int page_height = 0;
  std::uint64_t version = 0;

  /// Text handed to the model as the current page state.
  std::string to_prompt_text() const;
  friend bool operator==(const Observation&, const Observation&) = default;
};

json to_json(const Observation& o);
Observation observation_from_json(const json& j);

// ---------------------------------------------------------------------------
// Environment actions

namespace action {
struct Click {
  std::string element;
  friend bool operator==(const Click&, const Click&) = default;
};
enum class Direction { Up, Down };
struct Scroll {
  Direction direction = Direction::Down;
  int amount = 0;
  friend bool operator==(const Scroll&, const Scroll&) = default;
};
struct Type {
  std::string element;
  std::string text;
  friend bool operator==(const Type&, const Type&) = default;
};
struct Navigate {
  std::string url;
  friend bool operator==(const Navigate&, const Navigate&) = default;
};
}  // namespace action

using EnvAction = std::variant<action::Click, action::Scroll, action::Type, action::Navigate>;

std::string_view tool_name(const EnvAction& a);
std::string describe(const EnvAction& a);

struct ActionResult {
  bool ok = false;
  std::optional<ErrorCode> error;
  std::string message;
  /// Names of the effects that ran, in order ("navigate", "add_to_cart", ...).
  std::vector<std::string> effects;
  std::uint64_t version_before = 0;
  std::uint64_t version_after = 0;

  friend bool operator==(const ActionResult&, const ActionResult&) = default;
};

json to_json(const ActionResult& r);
ActionResult action_result_from_json(const json& j);

/// Fixture document: {id?, start_url, pages:[{url,title,height,elements:[{id,role,label,row,effects,hidden?,secret?}]}]}.
SimSite load_fixture(const json& doc);
SimSite load_fixture_text(std::string_view text);
SimSite load_fixture_file(const std::string& path);

Observation observe(const SimSite& site, const Viewport& viewport);

/// Applies one environment action. Failures leave site and viewport untouched.
ActionResult apply(SimSite& site, Viewport& viewport, const EnvAction& action);

std::string render_snapshot(const SimSite& site, const Viewport& viewport);

}  // namespace agentbuilder
