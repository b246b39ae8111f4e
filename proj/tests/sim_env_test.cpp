#include <doctest.h>

#include <random>

#include "agentbuilder/sim_env.hpp"
#include "support.hpp"

using namespace agentbuilder;

namespace {

ErrorCode load_error(const std::string& text) {
  try {
    load_fixture_text(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a fixture error");
  return ErrorCode::IoError;
}

/// Elements of the current page that observe() lists.
std::set<std::string> listed(const Observation& o) {
  std::set<std::string> ids;
  std::size_t pos = 0;
  while ((pos = o.accessibility_tree.find('[', pos)) != std::string::npos) {
    const auto end = o.accessibility_tree.find(']', pos);
    ids.insert(o.accessibility_tree.substr(pos + 1, end - pos - 1));
    pos = end;
  }
  return ids;
}

action::Scroll scroll(int amount) {
  return {amount >= 0 ? action::Direction::Down : action::Direction::Up, amount >= 0 ? amount : -amount};
}

const char* kTiny = R"({
  "id": "tiny", "start_url": "/a",
  "pages": [
    {"url": "/a", "title": "A", "height": 50, "elements": [
      {"id": "go", "role": "link", "label": "Go", "row": 1, "effects": [{"type": "navigate", "url": "/b"}]},
      {"id": "more", "role": "button", "label": "More", "row": 2, "effects": [{"type": "reveal", "element": "extra"}]},
      {"id": "extra", "role": "button", "label": "Extra", "row": 3, "hidden": true,
       "effects": [{"type": "add_to_cart", "item": "Extra"}]},
      {"id": "name", "role": "input", "label": "Name", "row": 4, "effects": [{"type": "set_value"}]},
      {"id": "pw", "role": "input", "label": "Password", "row": 5, "secret": true},
      {"id": "buy", "role": "button", "label": "Buy", "row": 6, "effects": [{"type": "purchase", "requires_value": "pw"}]},
      {"id": "far", "role": "button", "label": "Far", "row": 40, "effects": [{"type": "add_to_cart", "item": "Far"}]}
    ]},
    {"url": "/b", "title": "B", "height": 5, "elements": []}
  ]})";

}  // namespace

TEST_CASE("bundled coffee-shop fixture loads at its start page") {
  const auto site = testing::coffee_shop();
  CHECK(site.current_url == "/");
  CHECK(site.current_page().title == "Home");
  CHECK(site.cart.empty());
  CHECK(site.version == 0);
  const auto obs = observe(site, Viewport{0, 20});
  CHECK(obs.accessibility_tree.find("\"MENU\"") != std::string::npos);
  CHECK(render_snapshot(site, Viewport{0, 20}).find("[link] MENU") != std::string::npos);
  CHECK(site.pages.count("/bakery") == 1);
}

TEST_CASE("fixture errors") {
  CHECK(load_error("") == ErrorCode::NoPages);
  CHECK(load_error(R"({"start_url":"/","pages":[]})") == ErrorCode::NoPages);
  CHECK(load_error("{oops") == ErrorCode::ParseError);
  CHECK(load_error(R"({"start_url":"/","pages":[{"url":"/","title":"t","height":5,"elements":[
      {"id":"x","role":"text","label":"","row":0},{"id":"x","role":"text","label":"","row":1}]}]})") ==
        ErrorCode::DuplicateElement);
  CHECK(load_error(R"({"start_url":"/","pages":[{"url":"/","title":"t","height":5,"elements":[
      {"id":"x","role":"text","label":"","row":7}]}]})") == ErrorCode::InvalidFixture);
  CHECK(load_error(R"({"start_url":"/","pages":[{"url":"/","title":"t","height":5,"elements":[
      {"id":"x","role":"text","label":"","row":1,"effects":[{"type":"set_value"}]}]}]})") ==
        ErrorCode::InvalidFixture);
  CHECK(load_error(R"({"start_url":"/","pages":[{"url":"/","title":"t","height":5,"elements":[
      {"id":"x","role":"link","label":"","row":1,"effects":[{"type":"navigate","url":"/nope"}]}]}]})") ==
        ErrorCode::InvalidFixture);
  CHECK(load_error(R"({"start_url":"/z","pages":[{"url":"/","title":"t","height":5}]})") == ErrorCode::InvalidFixture);
  CHECK(load_error(R"({"pages":[{"url":"/","title":"t","height":5}]})") == ErrorCode::MissingField);
  CHECK(load_error(R"({"start_url":"/","pages":[{"url":"/","title":"t","height":5,"elements":[
      {"id":"x","role":"blink","label":"","row":1}]}]})") == ErrorCode::ParseError);
  try {
    load_fixture_text(R"({"start_url":"/","pages":[{"url":"/","title":"t"}]})");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingField);
    CHECK(e.where() == "/pages/0");
  }
}

TEST_CASE("observation lists exactly the elements inside the viewport") {
  auto site = load_fixture_text(kTiny);
  const auto all = observe(site, Viewport{0, 50});
  CHECK(listed(all) == std::set<std::string>{"go", "more", "name", "pw", "buy", "far"});
  const auto top = observe(site, Viewport{0, 20});
  CHECK(listed(top).count("far") == 0);
  CHECK(observe(site, Viewport{0, 20}) == top);
  CHECK(render_snapshot(site, Viewport{0, 20}) == render_snapshot(site, Viewport{0, 20}));
  site.current_url = "/b";
  CHECK(render_snapshot(site, Viewport{0, 5}) == "=== B | /b | rows 0-4 of 5 ===\n");
}

TEST_CASE("click navigates and increments the version") {
  auto site = testing::coffee_shop();
  Viewport v{0, 20};
  REQUIRE(apply(site, v, action::Click{"nav-menu"}).ok);
  const auto r = apply(site, v, action::Click{"cappuccino-link"});
  CHECK(r.ok);
  CHECK(r.effects == std::vector<std::string>{"navigate"});
  CHECK(r.version_after == r.version_before + 1);
  CHECK(site.current_url == "/menu/cappuccino");
}

TEST_CASE("out-of-viewport click fails until scrolled into view") {
  auto site = testing::coffee_shop();
  Viewport v{0, 20};
  apply(site, v, action::Click{"nav-menu"});
  apply(site, v, action::Click{"cappuccino-link"});
  const auto before = site;
  const auto fail = apply(site, v, action::Click{"btn-add-cart"});
  CHECK_FALSE(fail.ok);
  CHECK(fail.error == ErrorCode::ElementNotVisible);
  CHECK(site == before);
  CHECK(fail.version_after == fail.version_before);
  REQUIRE(apply(site, v, scroll(30)).ok);
  const auto ok = apply(site, v, action::Click{"btn-add-cart"});
  CHECK(ok.ok);
  CHECK(site.cart.size() == 1);
}

TEST_CASE("visible in the tree iff a click is not ELEMENT_NOT_VISIBLE") {
  const auto base = load_fixture_text(kTiny);
  for (int offset = 0; offset <= 45; ++offset) {
    for (int height : {1, 5, 20}) {
      Viewport v{offset, height};
      const auto shown = listed(observe(base, v));
      for (const auto& e : base.current_page().elements) {
        auto site = base;
        auto view = v;
        const auto r = apply(site, view, action::Click{e.id});
        const bool not_visible = !r.ok && r.error == ErrorCode::ElementNotVisible;
        CHECK(shown.count(e.id) == (site.is_present(e) && !not_visible && r.error != ErrorCode::ElementNotFound));
      }
    }
  }
}

TEST_CASE("scroll clamps to the page and is invertible without clamping") {
  auto site = load_fixture_text(kTiny);
  std::mt19937 rng(17);
  for (int i = 0; i < 500; ++i) {
    Viewport v{static_cast<int>(rng() % 31), 20};
    const int k = static_cast<int>(rng() % 40);
    auto s = site;
    auto w = v;
    apply(s, w, scroll(k));
    CHECK(w.offset >= 0);
    CHECK(w.offset <= 30);
    if (v.offset + k <= 30) {
      apply(s, w, scroll(-k));
      CHECK(w.offset == v.offset);
    }
  }
  Viewport v{0, 20};
  const auto r = apply(site, v, scroll(-5));
  CHECK(r.ok);
  CHECK(r.version_after == r.version_before);  // clamped to the same offset, nothing changed
  CHECK_FALSE(apply(site, v, action::Scroll{action::Direction::Down, -1}).ok);
}

TEST_CASE("typing, secrets, reveal and purchase preconditions") {
  auto site = load_fixture_text(kTiny);
  Viewport v{0, 20};
  CHECK(apply(site, v, action::Click{"extra"}).error == ErrorCode::ElementNotFound);
  CHECK(apply(site, v, action::Click{"more"}).ok);
  CHECK(listed(observe(site, v)).count("extra") == 1);
  CHECK(apply(site, v, action::Click{"extra"}).ok);

  CHECK(apply(site, v, action::Type{"go", "x"}).error == ErrorCode::InvalidTarget);
  CHECK(apply(site, v, action::Type{"ghost", "x"}).error == ErrorCode::ElementNotFound);
  CHECK(apply(site, v, action::Navigate{"/nowhere"}).error == ErrorCode::UnknownUrl);

  const auto before = site;
  const auto no_pw = apply(site, v, action::Click{"buy"});
  CHECK(no_pw.error == ErrorCode::PreconditionFailed);
  CHECK(site == before);

  REQUIRE(apply(site, v, action::Type{"pw", "hunter2"}).ok);
  const auto obs = observe(site, v);
  CHECK(obs.accessibility_tree.find("hunter2") == std::string::npos);
  CHECK(obs.accessibility_tree.find("*******") != std::string::npos);
  CHECK(obs.snapshot.find("hunter2") == std::string::npos);

  const auto bought = apply(site, v, action::Click{"buy"});
  CHECK(bought.ok);
  CHECK(site.orders.size() == 1);
  CHECK(site.cart.empty());
  CHECK(apply(site, v, action::Click{"buy"}).error == ErrorCode::PreconditionFailed);  // empty cart
}

TEST_CASE("add_to_cart records the selected options and merges repeats") {
  auto site = testing::coffee_shop();
  Viewport v{0, 20};
  apply(site, v, action::Click{"nav-menu"});
  apply(site, v, action::Click{"latte-link"});
  REQUIRE(apply(site, v, action::Type{"size-select", "Tall"}).ok);
  apply(site, v, action::Click{"btn-add-cart"});
  apply(site, v, action::Click{"btn-add-cart"});
  REQUIRE(site.cart.size() == 1);
  CHECK(site.cart[0].quantity == 2);
  CHECK(site.cart[0].options == std::vector<std::string>{"Tall"});
  CHECK(observe(site, v).cart_summary == "Caffè Latte x2 (Tall)");
}

TEST_CASE("random actions: failures are side-effect free, version never decreases, cart only via effects") {
  const auto base = testing::coffee_shop();
  std::mt19937 rng(5);
  std::vector<std::string> ids;
  std::vector<std::string> urls;
  for (const auto& [url, page] : base.pages) {
    urls.push_back(url);
    for (const auto& e : page.elements) ids.push_back(e.id);
  }
  urls.push_back("/missing");
  for (int run = 0; run < 30; ++run) {
    auto site = base;
    Viewport v{0, 20};
    for (int i = 0; i < 60; ++i) {
      EnvAction a;
      switch (rng() % 4) {
        case 0: a = action::Click{ids[rng() % ids.size()]}; break;
        case 1: a = scroll(static_cast<int>(rng() % 61) - 30); break;
        case 2: a = action::Type{ids[rng() % ids.size()], "v" + std::to_string(rng() % 3)}; break;
        default: a = action::Navigate{urls[rng() % urls.size()]}; break;
      }
      const auto before = site;
      const auto before_view = v;
      const auto r = apply(site, v, a);
      CHECK(site.version >= before.version);
      if (!r.ok) {
        CHECK(site == before);
        CHECK(v == before_view);
        CHECK(r.effects.empty());
      } else {
        const bool cart_effect =
            std::find(r.effects.begin(), r.effects.end(), "add_to_cart") != r.effects.end() ||
            std::find(r.effects.begin(), r.effects.end(), "purchase") != r.effects.end();
        if (!cart_effect) CHECK(site.cart == before.cart);
        CHECK((site.version > before.version) == (!(site == before) || !(v == before_view)));
      }
      CHECK(site.pages.count(site.current_url) == 1);
    }
  }
}

TEST_CASE("action results round-trip through JSON") {
  auto site = testing::coffee_shop();
  Viewport v{0, 20};
  for (const EnvAction& a : std::vector<EnvAction>{action::Click{"nav-menu"}, action::Click{"ghost"}, scroll(3)}) {
    const auto r = apply(site, v, a);
    CHECK(action_result_from_json(to_json(r)) == r);
  }
  const auto obs = observe(site, v);
  CHECK(observation_from_json(to_json(obs)) == obs);
}
