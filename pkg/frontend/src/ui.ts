// DOM rendering for the chat client: stage stepper, message list with
// attachments, composer, and the summary download control. Everything
// interactive is a native button, input, or link, so keyboard access comes
// for free; images always carry their caption as alt text.

import { ApiClient } from "./api.js";
import { SessionViewModel, UiSessionView } from "./session.js";
import { STAGE_COUNT, STAGE_LABELS, AttachmentPayload } from "./types.js";

export class ChatUi {
  private root: HTMLElement | null = null;

  constructor(
    private readonly vm: SessionViewModel,
    private readonly api: ApiClient,
  ) {}

  mount(root: HTMLElement): void {
    this.root = root;
    this.vm.subscribe(() => this.render());
    this.render();
  }

  private render(): void {
    if (!this.root) return;
    const view = this.vm.snapshot();
    this.root.replaceChildren(
      this.renderStepper(view),
      this.renderErrorBanner(view),
      this.renderMessages(view),
      this.renderComposer(view),
      this.renderDownload(view),
    );
  }

  private renderStepper(view: UiSessionView): HTMLElement {
    const nav = el("nav", { class: "stage-stepper", "aria-label": "session progress" });
    const list = el("ol");
    for (let ordinal = 1; ordinal <= STAGE_COUNT; ordinal++) {
      const item = el("li", {
        class:
          ordinal < view.stageOrdinal
            ? "stage done"
            : ordinal === view.stageOrdinal
              ? "stage current"
              : "stage upcoming",
      });
      if (ordinal === view.stageOrdinal) {
        item.setAttribute("aria-current", "step");
      }
      item.textContent = `${ordinal} — ${STAGE_LABELS[ordinal - 1]}`;
      list.appendChild(item);
    }
    nav.appendChild(list);
    const badge = el("p", { class: "stage-badge", "data-testid": "stage-badge" });
    badge.textContent = `${view.stageOrdinal} — ${view.stageLabel}`;
    nav.appendChild(badge);
    return nav;
  }

  private renderErrorBanner(view: UiSessionView): HTMLElement {
    const banner = el("div", { class: "error-banner", role: "alert" });
    if (view.errorBanner) {
      banner.textContent = view.errorBanner;
    } else {
      banner.hidden = true;
    }
    return banner;
  }

  private renderMessages(view: UiSessionView): HTMLElement {
    const list = el("ul", { class: "messages", "data-testid": "messages" });
    for (const message of view.messages) {
      const item = el("li", { class: `message ${message.role}` });
      const text = el("p");
      text.textContent = message.text; // verbatim payload text, never rewritten
      item.appendChild(text);
      for (const attachment of message.attachments) {
        item.appendChild(this.renderAttachment(attachment));
      }
      list.appendChild(item);
    }
    return list;
  }

  private renderAttachment(attachment: AttachmentPayload): HTMLElement {
    const wrap = el("figure", { class: `attachment ${attachment.kind}` });
    if (attachment.kind === "image") {
      const img = el("img", {
        src: this.api.assetUrl(attachment.uri),
        alt: attachment.caption,
      });
      wrap.appendChild(img);
      const caption = el("figcaption");
      caption.textContent = attachment.caption;
      wrap.appendChild(caption);
    } else if (attachment.kind === "document") {
      const link = el("a", { href: this.api.assetUrl(attachment.uri) });
      link.textContent = attachment.caption || "document";
      wrap.appendChild(link);
    } else {
      // Unknown kinds degrade to a labeled link instead of disappearing.
      const link = el("a", { href: this.api.assetUrl(attachment.uri) });
      link.textContent = `${attachment.kind}: ${attachment.caption || attachment.uri}`;
      wrap.appendChild(link);
    }
    return wrap;
  }

  private renderComposer(view: UiSessionView): HTMLElement {
    const form = el("form", { class: "composer" }) as HTMLFormElement;
    const input = el("input", {
      type: "text",
      name: "message",
      "aria-label": "your message",
      placeholder: view.pendingInput ? "sending…" : "type your answer",
    }) as HTMLInputElement;
    input.disabled = view.pendingInput || view.sessionComplete;
    const send = el("button", { type: "submit" }) as HTMLButtonElement;
    send.textContent = "Send";
    send.disabled = view.pendingInput || view.sessionComplete;
    form.appendChild(input);
    form.appendChild(send);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const text = input.value;
      input.value = "";
      void this.vm.sendMessage(text);
    });
    return form;
  }

  private renderDownload(view: UiSessionView): HTMLElement {
    const button = el("button", {
      type: "button",
      class: "download-summary",
      "data-testid": "download-summary",
    }) as HTMLButtonElement;
    button.textContent = "Download summary";
    button.disabled = !view.summaryAvailable;
    button.title = view.summaryAvailable
      ? "Save your counseling summary"
      : "Available after you confirm your profile in stage 5";
    button.addEventListener("click", () => {
      void this.vm.downloadSummary();
    });
    return button;
  }
}

function el(tag: string, attributes: Record<string, string> = {}): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attributes)) {
    node.setAttribute(key, value);
  }
  return node;
}

export function bootstrap(root: HTMLElement, baseUrl = ""): SessionViewModel {
  const api = new ApiClient(baseUrl);
  const vm = new SessionViewModel(api);
  const ui = new ChatUi(vm, api);
  ui.mount(root);
  void vm.startSession();
  return vm;
}
