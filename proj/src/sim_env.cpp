#include "agentbuilder/sim_env.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace agentbuilder {

namespace {

constexpr std::pair<ElementRole, std::string_view> kRoleNames[] = {
    {ElementRole::Button, "button"}, {ElementRole::Link, "link"},     {ElementRole::Text, "text"},
    {ElementRole::Input, "input"},   {ElementRole::Select, "select"}, {ElementRole::Image, "image"},
};

bool may_carry_effects(ElementRole r) {
  return r == ElementRole::Button || r == ElementRole::Link || r == ElementRole::Select || r == ElementRole::Input;
}

bool accepts_text(ElementRole r) { return r == ElementRole::Input || r == ElementRole::Select; }

std::string fixture_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::MissingField, std::string("missing field '") + key + "'", where);
  if (!it->is_string()) throw Error(ErrorCode::ParseError, std::string("'") + key + "' must be a string", where + "/" + key);
  return it->get<std::string>();
}

int fixture_int(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::MissingField, std::string("missing field '") + key + "'", where);
  if (!it->is_number_integer()) throw Error(ErrorCode::ParseError, std::string("'") + key + "' must be an integer", where + "/" + key);
  return it->get<int>();
}

Effect effect_from_json(const json& j, const std::string& where) {
  const auto type = fixture_string(j, "type", where);
  if (type == "navigate") return effect::Navigate{fixture_string(j, "url", where)};
  if (type == "add_to_cart") return effect::AddToCart{fixture_string(j, "item", where)};
  if (type == "reveal") return effect::Reveal{fixture_string(j, "element", where)};
  if (type == "set_value") return effect::SetValue{};
  if (type == "purchase") return effect::Purchase{j.value("requires_value", std::string{})};
  throw Error(ErrorCode::ParseError, "unknown effect type '" + type + "'", where + "/type");
}

bool in_view(const SimElement& e, const Viewport& v) { return e.row >= v.offset && e.row < v.offset + v.height; }

std::vector<const SimElement*> visible_elements(const SimSite& site, const Viewport& viewport) {
  std::vector<const SimElement*> out;
  for (const auto& e : site.current_page().elements)
    if (site.is_present(e) && in_view(e, viewport)) out.push_back(&e);
  std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->row < b->row; });
  return out;
}

std::string value_text(const SimSite& site, const SimElement& e) {
  auto it = site.form_values.find(e.id);
  if (it == site.form_values.end()) return {};
  return e.secret ? std::string(it->second.size(), '*') : it->second;
}

int max_offset(const SimPage& page, const Viewport& v) { return std::max(0, page.height - v.height); }

}  // namespace

std::string_view to_string(ElementRole role) {
  for (const auto& [r, name] : kRoleNames)
    if (r == role) return name;
  return "text";
}

std::string_view effect_name(const Effect& e) {
  return std::visit(
      [](const auto& x) -> std::string_view {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, effect::Navigate>) return "navigate";
        else if constexpr (std::is_same_v<T, effect::AddToCart>) return "add_to_cart";
        else if constexpr (std::is_same_v<T, effect::Reveal>) return "reveal";
        else if constexpr (std::is_same_v<T, effect::SetValue>) return "set_value";
        else return "purchase";
      },
      e);
}

const SimElement* SimPage::find(std::string_view id) const {
  for (const auto& e : elements)
    if (e.id == id) return &e;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Fixtures

SimSite load_fixture(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "fixture must be an object", "");
  auto pages_it = doc.find("pages");
  if (pages_it == doc.end() || !pages_it->is_array() || pages_it->empty())
    throw Error(ErrorCode::NoPages, "fixture has no pages", "/pages");

  SimSite site;
  site.fixture_id = doc.value("id", std::string("fixture"));
  for (std::size_t p = 0; p < pages_it->size(); ++p) {
    const std::string where = "/pages/" + std::to_string(p);
    const auto& jp = (*pages_it)[p];
    SimPage page;
    page.url = fixture_string(jp, "url", where);
    page.title = fixture_string(jp, "title", where);
    page.height = fixture_int(jp, "height", where);
    if (page.height <= 0) throw Error(ErrorCode::InvalidFixture, "page height must be positive", where + "/height");
    const auto elements = jp.value("elements", json::array());
    std::set<std::string> ids;
    for (std::size_t i = 0; i < elements.size(); ++i) {
      const std::string ew = where + "/elements/" + std::to_string(i);
      const auto& je = elements[i];
      SimElement e;
      e.id = fixture_string(je, "id", ew);
      if (!ids.insert(e.id).second)
        throw Error(ErrorCode::DuplicateElement, "element id '" + e.id + "' repeats on " + page.url, ew + "/id");
      const auto role = fixture_string(je, "role", ew);
      bool known = false;
      for (const auto& [r, name] : kRoleNames)
        if (name == role) e.role = r, known = true;
      if (!known) throw Error(ErrorCode::ParseError, "unknown element role '" + role + "'", ew + "/role");
      e.label = je.value("label", std::string{});
      e.row = fixture_int(je, "row", ew);
      if (e.row < 0 || e.row >= page.height)
        throw Error(ErrorCode::InvalidFixture, "element row outside page", ew + "/row");
      e.hidden = je.value("hidden", false);
      e.secret = je.value("secret", false);
      const auto effects = je.value("effects", json::array());
      for (std::size_t k = 0; k < effects.size(); ++k)
        e.effects.push_back(effect_from_json(effects[k], ew + "/effects/" + std::to_string(k)));
      if (!e.effects.empty() && !may_carry_effects(e.role))
        throw Error(ErrorCode::InvalidFixture, std::string(to_string(e.role)) + " elements cannot carry effects", ew + "/effects");
      page.elements.push_back(std::move(e));
    }
    if (site.pages.count(page.url)) throw Error(ErrorCode::InvalidFixture, "page url repeats: " + page.url, where + "/url");
    site.pages.emplace(page.url, std::move(page));
  }

  for (const auto& [url, page] : site.pages) {
    for (const auto& e : page.elements) {
      for (const auto& eff : e.effects) {
        if (const auto* nav = std::get_if<effect::Navigate>(&eff); nav && !site.pages.count(nav->url))
          throw Error(ErrorCode::InvalidFixture, "element '" + e.id + "' navigates to unknown url " + nav->url, url);
        if (const auto* rev = std::get_if<effect::Reveal>(&eff); rev && !page.find(rev->element))
          throw Error(ErrorCode::InvalidFixture, "element '" + e.id + "' reveals unknown element " + rev->element, url);
      }
    }
  }

  auto start = doc.find("start_url");
  if (start == doc.end() || !start->is_string()) throw Error(ErrorCode::MissingField, "missing field 'start_url'", "");
  site.current_url = start->get<std::string>();
  if (!site.pages.count(site.current_url))
    throw Error(ErrorCode::InvalidFixture, "start_url is not a page of the fixture", "/start_url");
  return site;
}

SimSite load_fixture_text(std::string_view text) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw Error(ErrorCode::NoPages, "empty fixture document", "/pages");
  try {
    return load_fixture(json::parse(text));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what(), "byte " + std::to_string(e.byte));
  }
}

SimSite load_fixture_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read fixture '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return load_fixture_text(buf.str());
}

// ---------------------------------------------------------------------------
// Observation

std::string Observation::to_prompt_text() const {
  std::ostringstream out;
  out << "Page: " << title << " (" << url << ")\n";
  out << "Viewport: rows " << viewport.offset << '-' << (viewport.offset + viewport.height - 1) << " of "
      << page_height << '\n';
  out << "Cart: " << cart_summary << '\n';
  out << "Visible elements:\n" << accessibility_tree;
  return out.str();
}

json to_json(const Observation& o) {
  return {{"url", o.url},
          {"title", o.title},
          {"accessibility_tree", o.accessibility_tree},
          {"snapshot", o.snapshot},
          {"cart", o.cart_summary},
          {"viewport", {{"offset", o.viewport.offset}, {"height", o.viewport.height}}},
          {"page_height", o.page_height},
          {"version", o.version}};
}

Observation observation_from_json(const json& j) {
  Observation o;
  o.url = j.at("url").get<std::string>();
  o.title = j.at("title").get<std::string>();
  o.accessibility_tree = j.at("accessibility_tree").get<std::string>();
  o.snapshot = j.at("snapshot").get<std::string>();
  o.cart_summary = j.at("cart").get<std::string>();
  o.viewport = {j.at("viewport").at("offset").get<int>(), j.at("viewport").at("height").get<int>()};
  o.page_height = j.at("page_height").get<int>();
  o.version = j.at("version").get<std::uint64_t>();
  return o;
}

Observation observe(const SimSite& site, const Viewport& viewport) {
  Observation obs;
  const auto& page = site.current_page();
  obs.url = page.url;
  obs.title = page.title;
  obs.viewport = viewport;
  obs.page_height = page.height;
  obs.version = site.version;
  std::ostringstream tree;
  for (const auto* e : visible_elements(site, viewport)) {
    tree << '[' << e->id << "] " << to_string(e->role) << " \"" << e->label << '"';
    if (accepts_text(e->role)) tree << " value=\"" << value_text(site, *e) << '"';
    tree << '\n';
  }
  obs.accessibility_tree = tree.str();
  obs.snapshot = render_snapshot(site, viewport);
  if (site.cart.empty()) {
    obs.cart_summary = "empty";
  } else {
    std::ostringstream cart;
    for (std::size_t i = 0; i < site.cart.size(); ++i) {
      const auto& item = site.cart[i];
      if (i) cart << "; ";
      cart << item.item << " x" << item.quantity;
      if (!item.options.empty()) {
        cart << " (";
        for (std::size_t k = 0; k < item.options.size(); ++k) cart << (k ? ", " : "") << item.options[k];
        cart << ')';
      }
    }
    obs.cart_summary = cart.str();
  }
  return obs;
}

std::string render_snapshot(const SimSite& site, const Viewport& viewport) {
  const auto& page = site.current_page();
  std::ostringstream out;
  out << "=== " << page.title << " | " << page.url << " | rows " << viewport.offset << '-'
      << (viewport.offset + viewport.height - 1) << " of " << page.height << " ===\n";
  for (const auto* e : visible_elements(site, viewport)) {
    std::string line = "[" + std::string(to_string(e->role)) + "] " + e->label;
    if (accepts_text(e->role)) line += ": " + value_text(site, *e);
    if (line.size() > 72) line = line.substr(0, 69) + "...";
    out << std::setw(4) << e->row << " | " << line << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Actions

std::string_view tool_name(const EnvAction& a) {
  return std::visit(
      [](const auto& x) -> std::string_view {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, action::Click>) return "click";
        else if constexpr (std::is_same_v<T, action::Scroll>) return "scroll";
        else if constexpr (std::is_same_v<T, action::Type>) return "type";
        else return "navigate";
      },
      a);
}

std::string describe(const EnvAction& a) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, action::Click>) return "click(" + x.element + ")";
        else if constexpr (std::is_same_v<T, action::Scroll>)
          return std::string("scroll(") + (x.direction == action::Direction::Down ? "down" : "up") + ", " +
                 std::to_string(x.amount) + ")";
        else if constexpr (std::is_same_v<T, action::Type>) return "type(" + x.element + ", \"" + x.text + "\")";
        else return "navigate(" + x.url + ")";
      },
      a);
}

json to_json(const ActionResult& r) {
  return {{"ok", r.ok},
          {"error", r.error ? json(code_name(*r.error)) : json(nullptr)},
          {"message", r.message},
          {"effects", r.effects},
          {"version_before", r.version_before},
          {"version_after", r.version_after}};
}

ActionResult action_result_from_json(const json& j) {
  ActionResult r;
  r.ok = j.at("ok").get<bool>();
  if (const auto& e = j.at("error"); !e.is_null()) {
    const auto name = e.get<std::string>();
    for (auto c : {ErrorCode::ElementNotFound, ErrorCode::ElementNotVisible, ErrorCode::InvalidTarget,
                   ErrorCode::UnknownUrl, ErrorCode::PreconditionFailed})
      if (code_name(c) == name) r.error = c;
  }
  r.message = j.at("message").get<std::string>();
  r.effects = j.at("effects").get<std::vector<std::string>>();
  r.version_before = j.at("version_before").get<std::uint64_t>();
  r.version_after = j.at("version_after").get<std::uint64_t>();
  return r;
}

namespace {

struct Failure {
  ErrorCode code;
  std::string message;
};

using Outcome = std::optional<Failure>;

Outcome locate(const SimSite& site, const Viewport& viewport, const std::string& id, const SimElement*& out) {
  const auto* e = site.current_page().find(id);
  if (!e || !site.is_present(*e)) return Failure{ErrorCode::ElementNotFound, "no element '" + id + "' on this page"};
  if (!in_view(*e, viewport))
    return Failure{ErrorCode::ElementNotVisible,
                   "element '" + id + "' is at row " + std::to_string(e->row) + ", outside the viewport"};
  out = e;
  return std::nullopt;
}

Outcome run_effects(SimSite& site, Viewport& viewport, const SimElement& element, std::vector<std::string>& ran) {
  // Options for add_to_cart come from the select inputs of the page the click happened on.
  std::vector<std::string> options;
  for (const auto& e : site.current_page().elements)
    if (e.role == ElementRole::Select)
      if (auto it = site.form_values.find(e.id); it != site.form_values.end() && !it->second.empty())
        options.push_back(it->second);

  for (const auto& eff : element.effects) {
    if (const auto* nav = std::get_if<effect::Navigate>(&eff)) {
      site.current_url = nav->url;
      viewport.offset = 0;
    } else if (const auto* add = std::get_if<effect::AddToCart>(&eff)) {
      auto it = std::find_if(site.cart.begin(), site.cart.end(),
                             [&](const CartItem& c) { return c.item == add->item && c.options == options; });
      if (it != site.cart.end())
        ++it->quantity;
      else
        site.cart.push_back({add->item, options, 1});
    } else if (const auto* rev = std::get_if<effect::Reveal>(&eff)) {
      site.revealed.insert(rev->element);
    } else if (const auto* buy = std::get_if<effect::Purchase>(&eff)) {
      if (!buy->requires_value.empty()) {
        auto it = site.form_values.find(buy->requires_value);
        if (it == site.form_values.end() || it->second.empty())
          return Failure{ErrorCode::PreconditionFailed, "purchase needs a value in '" + buy->requires_value + "'"};
      }
      if (site.cart.empty()) return Failure{ErrorCode::PreconditionFailed, "cart is empty"};
      site.orders.push_back(site.cart);
      site.cart.clear();
    }
    ran.emplace_back(effect_name(eff));
  }
  return std::nullopt;
}

}  // namespace

ActionResult apply(SimSite& site, Viewport& viewport, const EnvAction& act) {
  SimSite next_site = site;
  Viewport next_view = viewport;
  ActionResult result;
  result.version_before = site.version;

  Outcome failure = std::visit(
      [&](const auto& a) -> Outcome {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, action::Click>) {
          const SimElement* e = nullptr;
          if (auto f = locate(next_site, next_view, a.element, e)) return f;
          return run_effects(next_site, next_view, *e, result.effects);
        } else if constexpr (std::is_same_v<T, action::Type>) {
          const SimElement* e = nullptr;
          if (auto f = locate(next_site, next_view, a.element, e)) return f;
          if (!accepts_text(e->role))
            return Failure{ErrorCode::InvalidTarget, "cannot type into " + std::string(to_string(e->role)) + " '" + a.element + "'"};
          next_site.form_values[a.element] = a.text;
          result.effects.emplace_back("set_value");
          return std::nullopt;
        } else if constexpr (std::is_same_v<T, action::Scroll>) {
          if (a.amount < 0) return Failure{ErrorCode::InvalidTarget, "scroll amount must be non-negative"};
          const int delta = a.direction == action::Direction::Down ? a.amount : -a.amount;
          next_view.offset = std::clamp(next_view.offset + delta, 0, max_offset(next_site.current_page(), next_view));
          return std::nullopt;
        } else {
          if (!next_site.pages.count(a.url)) return Failure{ErrorCode::UnknownUrl, "no page at " + a.url};
          next_site.current_url = a.url;
          next_view.offset = 0;
          return std::nullopt;
        }
      },
      act);

  if (failure) {
    result.ok = false;
    result.error = failure->code;
    result.message = failure->message;
    result.effects.clear();
    result.version_after = site.version;
    return result;
  }

  const bool changed = !(next_site == site) || !(next_view == viewport);
  if (changed) {
    ++next_site.version;
    site = std::move(next_site);
    viewport = next_view;
  }
  result.ok = true;
  result.version_after = site.version;
  result.message = describe(act) + (changed ? " succeeded" : " succeeded (no change)");
  return result;
}

}  // namespace agentbuilder
