import { ApiClient } from "./client";
import { mount } from "./app";

const base = new URLSearchParams(location.search).get("api") ?? "";
mount(document.getElementById("app")!, new ApiClient(base));
